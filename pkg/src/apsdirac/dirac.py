"""Meshes and the discrete spatial Dirac operator.

The bounded direction uses the second-order diagonal-norm SBP pair
(P, Q) with Q + Q^T = diag(-1, 0, ..., 0, 1), so that

    <D psi, phi>_W - <psi, D phi>_W = -i sum_boundary mu (psi, gamma(e_n) phi)_SM

holds to round-off.  On the annulus the angular derivative is spectral on
half-integer (antiperiodic) modes; operators are stored as one radial block
per angular mode.  Node-space arrays have shape (I, 2) for n = 1 and
(I, K, 2) for n = 2; mode-space arrays have shape (B, I, 2) with B = 1 or K.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import FoliatedSpacetime, boundary_components
from .spin import CliffordRep, normal_gamma, tangential_gamma

MIN_NODES = 5
MIN_ANGULAR = 8


@dataclass(frozen=True)
class Mesh:
    spatial_dim: int
    x: np.ndarray  # radial / linear nodes
    sbp_weights: np.ndarray  # diagonal SBP norm along x
    theta: np.ndarray | None = None
    domain: tuple[float, float] = (0.0, 1.0)
    spin_structure: str = "antiperiodic"

    @property
    def I(self) -> int:
        return len(self.x)

    @property
    def K(self) -> int:
        return 1 if self.theta is None else len(self.theta)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def dtheta(self) -> float:
        return 1.0 if self.theta is None else 2 * np.pi / self.K

    @property
    def n_nodes(self) -> int:
        return self.I * self.K

    @property
    def n_blocks(self) -> int:
        return self.K

    @property
    def field_shape(self) -> tuple[int, ...]:
        return (self.I, 2) if self.spatial_dim == 1 else (self.I, self.K, 2)

    @property
    def nu(self) -> np.ndarray:
        """Angular frequencies k + 1/2 in block order ([0] for n = 1).

        The periodic spin structure (integer frequencies, including 0) is kept
        only to exercise the kernel check.
        """
        if self.theta is None:
            return np.zeros(1)
        K = self.K
        shift = 0.5 if self.spin_structure == "antiperiodic" else 0.0
        return np.arange(-K // 2, K // 2) + shift

    def boundary_index(self, component: str) -> int:
        comps = boundary_components(self.spatial_dim)
        if component == comps[0]:
            return 0
        if component == comps[1]:
            return self.I - 1
        raise KeyError(f"unknown boundary component {component!r}")

    def outward_sign(self, component: str) -> int:
        return -1 if self.boundary_index(component) == 0 else 1

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.field_shape[:-1], dtype=bool)
        m[0, ...] = True
        m[-1, ...] = True
        return m

    def mesh_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.array([self.spatial_dim, self.I, self.K], dtype="<i8").tobytes())
        h.update(np.array(self.domain, dtype="<f8").tobytes())
        h.update(self.spin_structure.encode())
        return h.hexdigest()

    # -- angular transforms -------------------------------------------------

    @cached_property
    def _fourier(self) -> np.ndarray:
        V = np.exp(1j * np.outer(self.theta, self.nu)) / np.sqrt(self.K)
        V.setflags(write=False)
        return V

    def fourier_matrix(self) -> np.ndarray:
        """Unitary V[k, m] = exp(i nu_m theta_k) / sqrt(K)."""
        return self._fourier.copy()

    def to_modes(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        if self.spatial_dim == 1:
            return psi.reshape(1, self.I, 2)
        flat = np.swapaxes(psi, 0, 1).reshape(self.K, -1)
        return (self._fourier.conj().T @ flat).reshape(self.K, self.I, 2)

    def from_modes(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=complex)
        if self.spatial_dim == 1:
            return c.reshape(self.I, 2)
        out = (self._fourier @ c.reshape(self.K, -1)).reshape(self.K, self.I, 2)
        return np.ascontiguousarray(np.swapaxes(out, 0, 1))


def build_mesh(st: FoliatedSpacetime, I: int, K: int | None = None, spin_structure: str = "antiperiodic") -> Mesh:
    if I < MIN_NODES:
        raise ValueError(f"need at least {MIN_NODES} nodes in the bounded direction, got {I}")
    lo, hi = st.domain
    x = np.linspace(lo, hi, I)
    dx = x[1] - x[0]
    P = np.full(I, dx)
    P[0] = P[-1] = dx / 2
    theta = None
    if st.spatial_dim == 2:
        if K is None or K < MIN_ANGULAR or K % 2:
            raise ValueError(f"angular node count must be even and >= {MIN_ANGULAR}, got {K}")
        theta = 2 * np.pi * np.arange(K) / K
    if spin_structure not in ("antiperiodic", "periodic"):
        raise ValueError(f"unknown spin structure {spin_structure!r}")
    return Mesh(st.spatial_dim, x, P, theta, (lo, hi), spin_structure)


def sbp_first_derivative(I: int, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (P, Q) of the 2-1 SBP first derivative D1 = P^-1 Q."""
    P = np.full(I, dx)
    P[0] = P[-1] = dx / 2
    Q = 0.5 * (np.eye(I, k=1) - np.eye(I, k=-1))
    Q[0, 0] = -0.5
    Q[-1, -1] = 0.5
    return P, Q


@dataclass
class DiracAssembly:
    """Discrete D_t in mode-block form with its L^2 weight and boundary data."""

    t: float
    mesh: Mesh
    rep: CliffordRep
    blocks: np.ndarray  # (B, 2I, 2I)
    weight: np.ndarray  # (I,), node weight incl. dtheta and sqrt|h|
    boundary_measure: dict  # component -> ring length element per node
    normal_symbol: dict = field(default_factory=dict)  # component -> T_n (2x2)
    angular_scale: dict = field(default_factory=dict)  # component -> 1/(Omega f) on the ring

    @property
    def block_weight(self) -> np.ndarray:
        return np.repeat(self.weight, 2)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        c = self.mesh.to_modes(psi).reshape(self.mesh.n_blocks, -1)
        out = np.einsum("bij,bj->bi", self.blocks, c)
        return self.mesh.from_modes(out.reshape(self.mesh.n_blocks, self.mesh.I, 2))

    def inner(self, psi: np.ndarray, phi: np.ndarray) -> complex:
        return weighted_inner(self.mesh, self.weight, psi, phi)

    def matrix(self) -> np.ndarray:
        """Dense node-space matrix reassembled from the blocks (node-major, spinor minor)."""
        return reassemble(self.mesh, self.blocks)

    def node_weights(self) -> np.ndarray:
        """Diagonal of W in the flattened node ordering."""
        return np.repeat(self.weight, self.mesh.K * 2)


def _radial_profiles(st: FoliatedSpacetime, mesh: Mesh, t: float):
    x = mesh.x
    om = st.conformal_values(t, x)
    s = st.scale_values(t, x)
    return om, s


def assemble_spatial_dirac(st: FoliatedSpacetime, rep: CliffordRep, mesh: Mesh, t: float) -> DiracAssembly:
    """SBP discretisation of D_t on (Sigma, h_t); requires unit lapse."""
    if not st.unit_lapse:
        raise ValueError("spatial Dirac assembly requires unit lapse; apply conformal_reduce first")
    n = st.spatial_dim
    if rep.spatial_dim != n:
        raise ValueError("representation dimension does not match the spacetime")
    I = mesh.I
    om, s = _radial_profiles(st, mesh, t)
    if np.any(om <= 0) or np.any(s <= 0):
        raise ValueError("metric is not positive definite on the mesh")
    P, Q = sbp_first_derivative(I, mesh.dx)
    D1 = Q / P[:, None]
    T1 = tangential_gamma(rep, 1)
    if n == 1:
        radial = (1.0 / (om * s))[:, None] * D1
        blocks = np.kron(radial, T1)[None]
        weight = P * om * s
    else:
        T2 = tangential_gamma(rep, 2)
        # Omega^{-3/2} F^{-1/2} D1 F^{1/2} Omega^{1/2}: spin-connection term f'/(2f) built in
        left = om**-1.5 * s**-0.5
        right = om**0.5 * s**0.5
        radial = np.kron(left[:, None] * D1 * right[None, :], T1)
        ang = np.kron(np.diag(1.0 / (om * s)), T2)
        blocks = radial[None] + 1j * mesh.nu[:, None, None] * ang[None]
        weight = P * om**2 * s * mesh.dtheta
    bm, ns, asc = {}, {}, {}
    for comp in boundary_components(n):
        i = mesh.boundary_index(comp)
        sign = mesh.outward_sign(comp)
        ns[comp] = sign * T1
        if n == 1:
            bm[comp] = 1.0
            asc[comp] = 0.0
        else:
            bm[comp] = float(om[i] * s[i] * mesh.dtheta)
            asc[comp] = float(1.0 / (om[i] * s[i]))
    return DiracAssembly(t, mesh, rep, blocks, weight, bm, ns, asc)


def angular_derivative_matrix(mesh: Mesh) -> np.ndarray:
    """Spectral d/dtheta sampled at theta_k (real and skew for the antiperiodic structure)."""
    V = mesh.fourier_matrix()
    Dth = V @ np.diag(1j * mesh.nu) @ V.conj().T
    return Dth.real if mesh.spin_structure == "antiperiodic" else Dth


def node_space_dirac(st: FoliatedSpacetime, rep: CliffordRep, mesh: Mesh, t: float) -> np.ndarray:
    """Dense node-space D_t assembled directly (independent of the mode blocks)."""
    n = st.spatial_dim
    om, s = _radial_profiles(st, mesh, t)
    P, Q = sbp_first_derivative(mesh.I, mesh.dx)
    D1 = Q / P[:, None]
    T1 = tangential_gamma(rep, 1)
    if n == 1:
        return np.kron((1.0 / (om * s))[:, None] * D1, T1)
    T2 = tangential_gamma(rep, 2)
    K = mesh.K
    left = om**-1.5 * s**-0.5
    right = om**0.5 * s**0.5
    radial = np.kron(np.kron(left[:, None] * D1 * right[None, :], np.eye(K)), T1)
    ang = np.kron(np.kron(np.diag(1.0 / (om * s)), angular_derivative_matrix(mesh)), T2)
    return radial + ang


def reassemble(mesh: Mesh, blocks: np.ndarray) -> np.ndarray:
    """Node-space matrix from mode blocks via the antiperiodic Fourier transform."""
    I = mesh.I
    if mesh.spatial_dim == 1:
        return blocks[0].copy()
    K = mesh.K
    V = mesh.fourier_matrix()
    b = blocks.reshape(K, I, 2, I, 2)
    # M[(i,k,s),(j,l,r)] = sum_m V[k,m] b[m,i,s,j,r] conj(V[l,m])
    M = np.einsum("km,misjr,lm->iksjlr", V, b, V.conj())
    return M.reshape(I * K * 2, I * K * 2)


def fourier_block_decompose(assembly: DiracAssembly) -> list[np.ndarray]:
    if assembly.mesh.spatial_dim != 2:
        raise ValueError("Fourier block decomposition is only defined on the annulus")
    return [b.copy() for b in assembly.blocks]


def boundary_flux_density(assembly: DiracAssembly, psi: np.ndarray, phi: np.ndarray) -> complex:
    """sum over boundary nodes of mu * (psi, gamma(e_n) phi)_SM."""
    mesh, rep = assembly.mesh, assembly.rep
    total = 0.0 + 0.0j
    for comp, mu in assembly.boundary_measure.items():
        i = mesh.boundary_index(comp)
        gn = normal_gamma(rep, mesh.outward_sign(comp))
        M = rep.beta @ gn
        a = psi[i].reshape(-1, 2)
        b = phi[i].reshape(-1, 2)
        total += mu * np.sum(np.einsum("ks,st,kt->k", a.conj(), M, b))
    return complex(total)


def boundary_term(assembly: DiracAssembly, psi: np.ndarray, phi: np.ndarray) -> complex:
    """Right-hand side of the discrete Green identity: -i * flux(psi, phi)."""
    return -1j * boundary_flux_density(assembly, psi, phi)


def _bmv(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Batched matrix-vector product (B, m, n) x (B, n) -> (B, m)."""
    return np.matmul(M, v[..., None])[..., 0]


def weighted_inner(mesh: Mesh, weight: np.ndarray, psi: np.ndarray, phi: np.ndarray) -> complex:
    w = weight.reshape((-1,) + (1,) * (np.ndim(psi) - 1))
    return complex(np.sum(w * np.conj(psi) * phi))
