"""Adapted boundary operators, APS / MIT projectors and the constrained Dirac operator.

On the annulus the adapted operator of a boundary ring is

    A = 1/2 (B + B^*),   B = sigma_n^{-1} T_theta (Omega f)^{-1} d/dtheta,

which is diagonal in the antiperiodic Fourier modes; on each mode it is a
Hermitian 2x2 matrix with eigenvalues +-nu/f.  At an interval endpoint the
boundary is a point and A = gamma(e_0) is used.

The constraint subspace is spanned by node-local vectors, so the basis Q is
W-orthonormal by construction and changes continuously with t.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .dirac import DiracAssembly, _bmv, Mesh, angular_derivative_matrix
from .errors import ConstructionFault, KernelError
from .spin import CliffordRep, normal_gamma, tangential_gamma

KERNEL_RTOL = 1e-10
HERMITIAN_FAULT_RTOL = 1e-9


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column real positive."""
    vecs = np.array(vecs, dtype=complex)
    idx = np.argmax(np.abs(vecs), axis=-2)
    piv = np.take_along_axis(vecs, idx[..., None, :], axis=-2)
    return vecs * (np.abs(piv) / piv)


@dataclass
class AdaptedBoundaryOperator:
    t: float
    component: str
    matrix: np.ndarray  # ring-trace operator, (2K, 2K), ordering (k, s)
    sigma_n: np.ndarray  # same shape
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mode_blocks: np.ndarray  # (B, 2, 2)

    @property
    def norm(self) -> float:
        return float(np.abs(self.eigenvalues).max())

    @property
    def min_abs_eigenvalue(self) -> float:
        return float(np.abs(self.eigenvalues).min())

    def anticommutator_residual(self) -> float:
        r = self.sigma_n @ self.matrix + self.matrix @ self.sigma_n
        return float(np.abs(r).max() / max(self.norm, 1e-300))


@dataclass
class KernelReport:
    min_abs_eigenvalue: float
    threshold: float
    passed: bool


def kernel_check(A) -> KernelReport:
    ev = np.linalg.eigvalsh(A.matrix) if hasattr(A, "matrix") else np.linalg.eigvalsh(np.asarray(A))
    scale = float(np.abs(ev).max())
    thr = KERNEL_RTOL * scale
    m = float(np.abs(ev).min())
    return KernelReport(m, thr, m >= thr and scale > 0)


def assemble_adapted_operator(assembly: DiracAssembly, component: str) -> AdaptedBoundaryOperator:
    mesh, rep = assembly.mesh, assembly.rep
    Tn = assembly.normal_symbol[component]
    Tn_inv = np.linalg.inv(Tn)
    if mesh.spatial_dim == 1:
        A = rep.gamma[0].copy()
        sigma = Tn.copy()
        blocks = A[None].copy()
    else:
        K = mesh.K
        T2 = tangential_gamma(rep, 2)
        scale = assembly.angular_scale[component]
        tang = scale * np.kron(angular_derivative_matrix(mesh), T2)
        sigma = np.kron(np.eye(K), Tn)
        B = np.kron(np.eye(K), Tn_inv) @ tang
        A = 0.5 * (B + B.conj().T)
        b = Tn_inv[None] @ (1j * mesh.nu[:, None, None] * scale * T2[None])
        blocks = 0.5 * (b + np.conj(np.swapaxes(b, -1, -2)))
    A = 0.5 * (A + A.conj().T)
    lam, vecs = np.linalg.eigh(A)
    vecs = _fix_phase(vecs)
    op = AdaptedBoundaryOperator(assembly.t, component, A, sigma, lam, vecs, blocks)
    rep_ = kernel_check(op)
    if not rep_.passed:
        raise KernelError(
            f"adapted operator on {component!r} has kernel: min|lambda| = {rep_.min_abs_eigenvalue:.3g}"
        )
    return op


@dataclass
class BoundaryConditionSpec:
    component: str
    tag: str
    projector: np.ndarray  # ring-level projector onto the *forbidden* trace subspace
    rows: np.ndarray  # (B, m, 2): per-mode constraint rows at the boundary node
    pi_negative: np.ndarray | None = None
    operator: AdaptedBoundaryOperator | None = None

    @property
    def allowed_projector(self) -> np.ndarray:
        return np.eye(self.projector.shape[0]) - self.projector

    def idempotency_residual(self) -> float:
        P = self.projector
        return float(max(np.abs(P @ P - P).max(), np.abs(P - P.conj().T).max()))


def aps_projector(A: AdaptedBoundaryOperator) -> BoundaryConditionSpec:
    """Pi_{<0} from the spectral decomposition; the condition is Pi_{>=0} r psi = 0."""
    rep_ = kernel_check(A)
    if not rep_.passed:
        raise KernelError(f"APS projector undefined: adapted operator on {A.component!r} has kernel")
    neg = A.eigenvalues < 0
    V = A.eigenvectors[:, neg]
    pi_neg = V @ V.conj().T
    pi_nonneg = np.eye(len(A.eigenvalues)) - pi_neg
    lam, vecs = np.linalg.eigh(A.mode_blocks)
    vecs = _fix_phase(vecs)
    rows = []
    for b in range(len(lam)):
        sel = vecs[b][:, lam[b] >= 0]
        rows.append(sel.conj().T)
    return BoundaryConditionSpec(A.component, "APS", pi_nonneg, np.array(rows), pi_neg, A)


def mit_projector(rep: CliffordRep, component: str, mesh: Mesh) -> BoundaryConditionSpec:
    """P = (Id + i gamma(e_n)) / 2 per boundary node; the condition is P r psi = 0."""
    gn = normal_gamma(rep, mesh.outward_sign(component))
    P = 0.5 * (np.eye(2) + 1j * gn)
    w, v = np.linalg.eigh(0.5 * (P + P.conj().T))
    u = _fix_phase(v[:, w > 0.5])
    row = u.conj().T
    ring = np.kron(np.eye(mesh.K), P)
    rows = np.broadcast_to(row, (mesh.n_blocks,) + row.shape).copy()
    return BoundaryConditionSpec(component, "MIT", ring, rows)


def build_specs(assembly: DiracAssembly, tags: dict) -> dict:
    specs = {}
    for comp, tag in tags.items():
        if tag == "APS":
            specs[comp] = aps_projector(assemble_adapted_operator(assembly, comp))
        elif tag == "MIT":
            specs[comp] = mit_projector(assembly.rep, comp, assembly.mesh)
        else:
            raise ValueError(f"unknown boundary condition {tag!r}")
    return specs


def _row_null_space(rows: np.ndarray) -> np.ndarray:
    """Orthonormal null vectors of per-block constraint rows (B, m, 2) -> (B, 2, 2 - m)."""
    B, m, _ = rows.shape
    if m == 0:
        return np.broadcast_to(np.eye(2, dtype=complex), (B, 2, 2)).copy()
    if m == 1:
        r = rows[:, 0, :]
        v = np.stack([r[:, 1], -r[:, 0]], axis=-1)
        v = v / np.linalg.norm(v, axis=-1, keepdims=True)
        return _fix_phase(v[:, :, None])
    return np.array([_fix_phase(sla.null_space(r)) for r in rows]).reshape(B, 2, -1)


def _local_bases(mesh: Mesh, specs: dict) -> dict:
    return {mesh.boundary_index(spec.component): _row_null_space(spec.rows) for spec in specs.values()}


def _segments(I: int, local: dict) -> list:
    """Split the 2I unknowns into (start, stop, local basis or None) runs."""
    segs, start = [], 0
    for i in sorted(local):
        if 2 * i > start:
            segs.append((start, 2 * i, None))
        segs.append((2 * i, 2 * i + 2, local[i]))
        start = 2 * i + 2
    if start < 2 * I:
        segs.append((start, 2 * I, None))
    return segs


def constraint_basis(mesh: Mesh, weight: np.ndarray, specs: dict) -> np.ndarray:
    """W-orthonormal basis Q (B, 2I, d) of the joint constraint null space."""
    I, B = mesh.I, mesh.n_blocks
    segs = _segments(I, _local_bases(mesh, specs))
    d = sum((b - a) if v is None else v.shape[-1] for a, b, v in segs)
    sw = 1.0 / np.sqrt(np.repeat(weight, 2))
    Q = np.zeros((B, 2 * I, d), dtype=complex)
    col = 0
    for a, b, v in segs:
        if v is None:
            k = b - a
            Q[:, a:b, col : col + k] = np.diag(sw[a:b])
        else:
            k = v.shape[-1]
            Q[:, a:b, col : col + k] = v * sw[a:b, None]
        col += k
    return Q


def _compress(M: np.ndarray, segs: list) -> np.ndarray:
    """V^* M V for the block-local basis V described by ``segs``."""
    cols = [M[:, :, a:b] if v is None else M[:, :, a:b] @ v for a, b, v in segs]
    Mc = np.concatenate(cols, axis=2)
    rows = [Mc[:, a:b, :] if v is None else np.conj(np.swapaxes(v, -1, -2)) @ Mc[:, a:b, :] for a, b, v in segs]
    return np.concatenate(rows, axis=1)


@dataclass
class ConstrainedDirac:
    assembly: DiracAssembly
    specs: dict
    Q: np.ndarray  # (B, 2I, d)
    Dc: np.ndarray  # (B, d, d), Hermitian part
    hermiticity_residual: float
    eig_cache: dict = field(default_factory=dict, repr=False)

    @property
    def mesh(self) -> Mesh:
        return self.assembly.mesh

    @property
    def dim(self) -> int:
        return self.Q.shape[-1] * self.Q.shape[0]

    @property
    def bw(self) -> np.ndarray:
        return self.assembly.block_weight

    def coords(self, psi: np.ndarray) -> np.ndarray:
        c = self.mesh.to_modes(psi).reshape(self.mesh.n_blocks, -1)
        return _bmv(np.conj(np.swapaxes(self.Q, -1, -2)), self.bw * c)

    def field(self, c: np.ndarray) -> np.ndarray:
        v = _bmv(self.Q, c)
        return self.mesh.from_modes(v.reshape(self.mesh.n_blocks, self.mesh.I, 2))

    def project(self, psi: np.ndarray) -> np.ndarray:
        return self.field(self.coords(psi))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """P_C D psi, the constrained operator acting on node fields."""
        return self.field(_bmv(self.Dc, self.coords(psi)))

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.Dc)

    @property
    def norm(self) -> float:
        return float(np.abs(self.eigh[0]).max())


def constrain_operator(assembly: DiracAssembly, specs: dict) -> ConstrainedDirac:
    times = {s.operator.t for s in specs.values() if s.operator is not None}
    if any(abs(t - assembly.t) > 0 for t in times):
        raise ValueError("boundary specs were built at a different time than the assembly")
    Q = constraint_basis(assembly.mesh, assembly.weight, specs)
    # Q = diag(W^-1/2) V with V block-local, so Q^* W D Q = V^* (W^1/2 D W^-1/2) V
    sw = np.sqrt(assembly.block_weight)
    M = sw[None, :, None] * assembly.blocks / sw[None, None, :]
    Dc = _compress(M, _segments(assembly.mesh.I, _local_bases(assembly.mesh, specs)))
    scale = float(np.abs(Dc).max())
    resid = float(np.abs(Dc - np.conj(np.swapaxes(Dc, -1, -2))).max()) / max(scale, 1e-300)
    if resid > HERMITIAN_FAULT_RTOL:
        raise ConstructionFault(f"constrained operator is not Hermitian (relative residual {resid:.3g})")
    Dh = 0.5 * (Dc + np.conj(np.swapaxes(Dc, -1, -2)))
    return ConstrainedDirac(assembly, specs, Q, Dh, resid)


def constrain_dense(assembly: DiracAssembly, specs: dict) -> np.ndarray:
    """Node-space compression using the ring-level projectors (oracle route).

    Returns the Hermitian compressed matrix; its spectrum must equal the union of
    the per-mode spectra of :func:`constrain_operator`.
    """
    mesh = assembly.mesh
    I, K = mesh.I, mesh.K
    N = 2 * I * K
    rows = []
    for spec in specs.values():
        i = mesh.boundary_index(spec.component)
        R = np.zeros((2 * K, N))
        for k in range(K):
            for s in range(2):
                R[2 * k + s, (i * K + k) * 2 + s] = 1.0
        P = spec.projector
        # keep a row basis of range(P) so the constraint matrix has full row rank
        w, v = np.linalg.eigh(0.5 * (P + P.conj().T))
        basis = v[:, w > 0.5]
        rows.append(basis.conj().T @ R)
    C = np.vstack(rows)
    Z = sla.null_space(C)
    w = assembly.node_weights()
    G = Z.conj().T @ (w[:, None] * Z)
    ev, U = np.linalg.eigh(G)
    Q = Z @ U @ np.diag(ev**-0.5) @ U.conj().T
    D = assembly.matrix()
    Dc = Q.conj().T @ (w[:, None] * D) @ Q
    return Dc
