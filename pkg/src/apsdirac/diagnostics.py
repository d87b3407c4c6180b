"""Post-processing of solve results: energy, flux, causal support and convergence."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dirac import Mesh, boundary_flux_density
from .evolution import SolveResult
from .geometry import FoliatedSpacetime, boundary_components


def _region_mask(mesh: Mesh, region) -> np.ndarray:
    if region in (None, "all"):
        return np.ones(mesh.I, dtype=bool)
    lo, hi = region
    return (mesh.x >= lo) & (mesh.x <= hi)


def slice_energy(weight: np.ndarray, psi: np.ndarray, mask: np.ndarray | None = None) -> float:
    """F = sum_nodes w |psi|^2 (the positive pairing is Euclidean)."""
    dens = np.sum(np.abs(psi) ** 2, axis=-1)
    while dens.ndim > 1:
        dens = dens.sum(axis=-1)
    w = weight if mask is None else weight * mask
    return float(np.sum(w * dens))


# -- energy ------------------------------------------------------------------


@dataclass
class EnergyReport:
    times: np.ndarray
    F: np.ndarray
    C: float
    source_integral: np.ndarray  # cumulative int_0^t ||f||^2
    margins: np.ndarray  # per t1: min over t0 < t1 of the inequality margin
    picture: str = "reduced"

    @property
    def feasible(self) -> bool:
        return bool(np.isfinite(self.C) and np.all(self.margins >= 0))


def fit_gronwall(times: np.ndarray, F: np.ndarray, S: np.ndarray, iters: int = 200) -> tuple[float, np.ndarray]:
    """Smallest C >= 0 with F(t1) <= exp(C (t1 - t0)) [F(t0) + C int_{t0}^{t1} ||f||^2] on all pairs.

    ``S`` is the cumulative source integral.  Returns (C, margin per t1).
    """
    n = len(times)
    i, j = np.triu_indices(n, k=1)
    tau = np.abs(times[j] - times[i])
    Fi, Fj, Sij = F[i], F[j], np.abs(S[j] - S[i])

    def rhs(C):
        return np.exp(C * tau) * (Fi + C * Sij)

    need = rhs(0.0) < Fj
    C = 0.0
    if np.any(need):
        tn, Fin, Fjn, Sn = tau[need], Fi[need], Fj[need], Sij[need]
        dead = (Fin <= 0) & (Sn <= 0)
        if np.any(dead):
            return np.inf, np.full(n, -np.inf)
        lo = np.zeros(len(tn))
        hi = np.ones(len(tn))
        for _ in range(200):
            bad = np.exp(hi * tn) * (Fin + hi * Sn) < Fjn
            if not bad.any():
                break
            hi[bad] *= 2
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            ok = np.exp(mid * tn) * (Fin + mid * Sn) >= Fjn
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        C = float(hi.max())
    marg = rhs(C) - Fj
    per_t = np.full(n, np.inf)
    np.minimum.at(per_t, j, marg)
    per_t[0] = 0.0
    return C, per_t


def energy(result: SolveResult, region="all", picture: str = "reduced", max_samples: int = 101) -> EnergyReport:
    mesh = result.mesh
    mask = _region_mask(mesh, region)
    times = result.times
    if picture == "reduced":
        fields = result.reduced
        weights = [result.reduction.weight0] * len(times)
        snorm = result.source_norms
    elif picture == "physical":
        if result.physical is None:
            raise ValueError("result has no physical-picture snapshots")
        fields = result.physical
        st = result.maps.original if result.maps is not None else result.reduction.spacetime
        weights = [mesh.sbp_weights * st.sqrt_det_h(t, mesh.x) * mesh.dtheta for t in times]
        snorm = result.meta.get("physical_source_norms", result.source_norms)
    else:
        raise ValueError(f"unknown picture {picture!r}")
    F = np.array([slice_energy(w, u, mask) for w, u in zip(weights, fields)])
    sq = np.asarray(snorm) ** 2
    S = np.concatenate([[0.0], np.cumsum(0.5 * (sq[1:] + sq[:-1]) * np.diff(times))])
    idx = np.unique(np.linspace(0, len(times) - 1, min(len(times), max_samples)).round().astype(int))
    C, marg = fit_gronwall(times[idx], F[idx], S[idx])
    return EnergyReport(times[idx], F[idx], C, S[idx], marg, picture)


# -- flux --------------------------------------------------------------------


def boundary_flux(result: SolveResult) -> np.ndarray:
    """|sum over boundary nodes of mu (psi, gamma(e_n) psi)| per saved time (reduced picture)."""
    out = np.empty(len(result.times))
    for j, t in enumerate(result.times):
        op = result.reduction.operator(t)
        out[j] = abs(boundary_flux_density(op.assembly, result.reduced[j], result.reduced[j]))
    return out


def relative_flux(result: SolveResult) -> float:
    F = np.asarray(result.norms) ** 2
    return float(boundary_flux(result).max() / max(F.max(), 1e-300))


# -- support -----------------------------------------------------------------


@dataclass
class SupportReport:
    times: np.ndarray
    mass_cone: np.ndarray
    mass_collar: np.ndarray  # inside the boundary collar but outside the data cone
    mass_outside: np.ndarray
    total: np.ndarray
    contact_time: float
    collar_components: tuple = ()

    @property
    def leakage(self) -> np.ndarray:
        return self.mass_outside / np.maximum(self.total, 1e-300)

    def max_leakage(self, before_contact: bool = False) -> float:
        sel = self.times <= self.contact_time if before_contact else np.ones(len(self.times), bool)
        return float(self.leakage[sel].max())


def _boundary_distance(st: FoliatedSpacetime, mesh: Mesh, component: str) -> np.ndarray:
    ts = np.linspace(*st.time_window, 9)
    om_min = min(float(st.conformal_values(t, mesh.x).min()) for t in ts)
    if st.spatial_dim == 1:
        om_min *= min(float(st.scale_values(t, mesh.x).min()) for t in ts)
    i = mesh.boundary_index(component)
    d = om_min * np.abs(mesh.x - mesh.x[i])
    return d if st.spatial_dim == 1 else np.broadcast_to(d[:, None], (mesh.I, mesh.K))


def cell_margin(st: FoliatedSpacetime, mesh: Mesh) -> float:
    ts = np.linspace(*st.time_window, 9)
    L = [st.scale_values(t, mesh.x) * st.conformal_values(t, mesh.x) for t in ts]
    om = [st.conformal_values(t, mesh.x) for t in ts]
    if st.spatial_dim == 1:
        return float(max(l.max() for l in L) * mesh.dx)
    return float(max(max(o.max() for o in om) * mesh.dx, max(l.max() for l in L) * mesh.dtheta))


def support_mass(result: SolveResult, center, radius: float, speed: float = 1.0,
                 improved: bool = False, t_data: float | None = None) -> SupportReport:
    """Mass outside J(supp data) union J(boundary collar) at coordinate speed ``speed``.

    With ``improved`` the collar only grows from APS components (MIT components
    are local and cast no shadow).
    """
    from .data import support_distance

    red = result.reduction
    st, mesh = red.spacetime, red.mesh
    t_data = result.times[0] if t_data is None else t_data
    dist = support_distance(st, mesh, center)
    margin = cell_margin(st, mesh)
    comps = boundary_components(st.spatial_dim)
    if improved:
        comps = tuple(c for c in comps if red.tags.get(c) == "APS")
    bdist = [_boundary_distance(st, mesh, c) for c in comps]
    all_bdist = [_boundary_distance(st, mesh, c) for c in boundary_components(st.spatial_dim)]
    contact = float(min(d[dist <= radius].min() for d in all_bdist)) / speed
    w = red.weight0
    out = {k: [] for k in ("cone", "collar", "outside", "total")}
    for t, psi in zip(result.times, result.reduced):
        reach = speed * abs(t - t_data) + margin
        dens = np.sum(np.abs(psi) ** 2, axis=-1) * (w if psi.ndim == 2 else w[:, None])
        cone = dist <= radius + reach
        collar = np.zeros_like(cone)
        for d in bdist:
            collar |= d <= reach
        out["cone"].append(dens[cone].sum())
        out["collar"].append(dens[collar & ~cone].sum())
        out["outside"].append(dens[~(cone | collar)].sum())
        out["total"].append(dens.sum())
    return SupportReport(result.times.copy(), *(np.array(out[k]) for k in ("cone", "collar", "outside", "total")),
                         contact_time=max(contact, 0.0), collar_components=comps)


# -- uniqueness / convergence ------------------------------------------------


def uniqueness_probe(a: SolveResult, b: SolveResult) -> float:
    """sup over t of the W_0 distance between two solves on the same grid."""
    if a.reduced.shape != b.reduced.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("solutions live on different grids")
    red = a.reduction
    return float(max(red.norm(u - v) for u, v in zip(a.reduced, b.reduced)))


def restrict_to_coarse(fine: np.ndarray, coarse_mesh: Mesh, fine_mesh: Mesh) -> np.ndarray:
    """Injection onto nested coarse nodes (x: every other node; theta: every other angle)."""
    sx = (fine_mesh.I - 1) // (coarse_mesh.I - 1)
    if (coarse_mesh.I - 1) * sx != fine_mesh.I - 1:
        raise ValueError("meshes are not nested")
    out = fine[::sx]
    if coarse_mesh.spatial_dim == 2:
        sk = fine_mesh.K // coarse_mesh.K
        out = out[:, ::sk]
    return out


@dataclass
class ConvergenceReport:
    resolutions: list
    differences: list  # ||u_j - R u_{j+1}|| on the coarser mesh
    orders: list
    norms: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "resolutions": [list(map(int, r)) for r in self.resolutions],
            "differences": [float(d) for d in self.differences],
            "orders": [float(o) for o in self.orders],
            "norms": [float(n) for n in self.norms],
        }


def convergence_study(run: Callable[[tuple], tuple[np.ndarray, Mesh, np.ndarray]],
                      resolutions: Sequence[tuple]) -> ConvergenceReport:
    """Self-convergence on nested resolutions.

    ``run(resolution)`` returns (final field, mesh, node weight).  The
    difference of consecutive levels is measured in the weighted norm of the
    coarser mesh; observed order is log2 of the ratio of successive
    differences.
    """
    sols = [run(tuple(r)) for r in resolutions]
    diffs, norms = [], []
    for (u, m, w), (v, mf, _) in zip(sols, sols[1:]):
        e = u - restrict_to_coarse(v, m, mf)
        diffs.append(np.sqrt(slice_energy(w, e)))
    for u, _, w in sols:
        norms.append(np.sqrt(slice_energy(w, u)))
    orders = [float(np.log2(a / b)) if a > 0 and b > 0 else float("nan") for a, b in zip(diffs, diffs[1:])]
    return ConvergenceReport([tuple(r) for r in resolutions], diffs, orders, norms)


def lipschitz_ratios(data: Sequence[np.ndarray], solutions: Sequence[np.ndarray]) -> np.ndarray:
    """||s_i - s_j|| / ||d_i - d_j|| over all pairs of weighted, flattened vectors."""
    out = []
    for i in range(len(data)):
        for j in range(i + 1, len(data)):
            dd = np.linalg.norm(data[i] - data[j])
            if dd > 0:
                out.append(np.linalg.norm(solutions[i] - solutions[j]) / dd)
    return np.array(out)
