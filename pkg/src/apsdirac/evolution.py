"""Hamiltonian reduction and time integration of the constrained Dirac flow.

With unit lapse, D_M psi = f is equivalent on the reference slice to

    (d/dt + i Dt~) psi~ = f~,   psi~ = rho_t psi,   f~ = -gamma_0 rho_t f,

where rho_t = (|h_t| / |h_0|)^(1/4) and Dt~ = rho_t D_t rho_t^-1.  The
L2 product of Sigma_t with weight W_t = W_0 rho_t^2 becomes the fixed W_0
product, and the mean-curvature term is absorbed by the rho conjugation.

All engines work in coordinates of the W_0-orthonormal constraint basis Q, so
the state norm is the Euclidean norm of the coordinate vector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .boundary import ConstrainedDirac, build_specs, constrain_operator
from .dirac import DiracAssembly, _bmv, Mesh, assemble_spatial_dirac, boundary_flux_density, weighted_inner
from .errors import AssumptionError, SolverError
from .geometry import (
    BOUNDARY_LAPSE_TOL,
    FoliatedSpacetime,
    WeightMaps,
    conformal_reduce,
    density_factor,
    validate_assumptions,
)
from .spin import CliffordRep

log = logging.getLogger(__name__)

Source = Callable[[float], np.ndarray]

SCHEMES = ("midpoint", "mollified_picard")


def _expand(w: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return w.reshape(w.shape + (1,) * (psi.ndim - w.ndim))


def _is_static(st: FoliatedSpacetime, mesh: Mesh) -> bool:
    ts = np.linspace(*st.time_window, 9)
    s0 = st.sqrt_det_h(0.0, mesh.x)
    c0 = st.conformal_values(0.0, mesh.x)
    return all(
        np.array_equal(st.sqrt_det_h(t, mesh.x), s0) and np.array_equal(st.conformal_values(t, mesh.x), c0)
        for t in ts
    )


@dataclass
class HamiltonianReduction:
    spacetime: FoliatedSpacetime
    rep: CliffordRep
    mesh: Mesh
    tags: dict
    weight0: np.ndarray
    static: bool
    _ops: dict = field(default_factory=dict, repr=False)

    def rho(self, t: float) -> np.ndarray:
        if self.static:
            return np.ones(self.mesh.I)
        return density_factor(self.spacetime, t, self.mesh.x)

    def forward(self, t: float, psi: np.ndarray) -> np.ndarray:
        return _expand(self.rho(t), psi) * psi

    def inverse(self, t: float, psi: np.ndarray) -> np.ndarray:
        return psi / _expand(self.rho(t), psi)

    def source(self, t: float, f: np.ndarray) -> np.ndarray:
        """f -> f~ = -gamma_0 rho_t f."""
        g0 = self.rep.gamma[0]
        return -np.einsum("st,...t->...s", g0, self.forward(t, f))

    def weight(self, t: float) -> np.ndarray:
        """W_t computed directly from sqrt|h_t| (independent of rho)."""
        P = self.mesh.sbp_weights
        return P * self.spacetime.sqrt_det_h(t, self.mesh.x) * self.mesh.dtheta

    def norm(self, psi: np.ndarray) -> float:
        return float(np.sqrt(weighted_inner(self.mesh, self.weight0, psi, psi).real))

    def assembly(self, t: float) -> DiracAssembly:
        a = assemble_spatial_dirac(self.spacetime, self.rep, self.mesh, t)
        if self.static:
            return a
        rho = self.rho(t)
        r = np.repeat(rho, 2)
        blocks = r[None, :, None] * a.blocks / r[None, None, :]
        bm = {c: mu / rho[self.mesh.boundary_index(c)] ** 2 for c, mu in a.boundary_measure.items()}
        return DiracAssembly(t, self.mesh, self.rep, blocks, self.weight0.copy(), bm, a.normal_symbol, a.angular_scale)

    def operator(self, t: float) -> ConstrainedDirac:
        """Constrained reduced operator at time t (cached for static geometries)."""
        key = 0.0 if self.static else float(t)
        op = self._ops.get(key)
        if op is None:
            a = self.assembly(t)
            op = constrain_operator(a, build_specs(a, self.tags))
            if len(self._ops) > 8:
                self._ops.clear()
            self._ops[key] = op
        return op


def hamiltonian_reduce(st: FoliatedSpacetime, rep: CliffordRep, mesh: Mesh, tags: dict | None = None):
    if not st.unit_lapse:
        raise ValueError("Hamiltonian reduction requires unit lapse; apply conformal_reduce first")
    tags = dict(st.boundary if tags is None else tags)
    w0 = assemble_spatial_dirac(st, rep, mesh, 0.0).weight
    return HamiltonianReduction(st, rep, mesh, tags, w0, _is_static(st, mesh))


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    scheme: str = "midpoint"
    epsilon_schedule: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    picard_tol: float = 1e-12
    picard_max_iter: int = 200
    save_every: int = 1
    store_physical: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        eps = tuple(float(e) for e in self.epsilon_schedule)
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon schedule must be positive and strictly decreasing")
        object.__setattr__(self, "epsilon_schedule", eps)
        if self.save_every < 1 or self.picard_max_iter < 1 or not self.picard_tol > 0:
            raise ValueError("save_every, picard_max_iter and picard_tol must be positive")


@dataclass
class SolveResult:
    times: np.ndarray
    reduced: np.ndarray  # (n_saved, *field_shape)
    norms: np.ndarray
    flux: np.ndarray
    source_norms: np.ndarray
    reduction: HamiltonianReduction
    physical: np.ndarray | None = None
    maps: WeightMaps | None = None
    meta: dict = field(default_factory=dict)

    @property
    def mesh(self) -> Mesh:
        return self.reduction.mesh

    @property
    def n_steps(self) -> int:
        return int(self.meta.get("n_steps", len(self.times) - 1))


def time_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    span = t1 - t0
    n = max(1, int(round(abs(span) / dt)))
    return t0 + span * np.arange(n + 1) / n


# -- midpoint engine ----------------------------------------------------------


def cayley_matrices(Dc: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (S, G) with c+ = S c + G g for (I + i dt/2 D) c+ = (I - i dt/2 D) c + dt g.

    For Hermitian D every singular value of I + i dt/2 D is >= 1, so the solve
    only fails on non-finite input.  G = dt L^-1 = dt (S + I) / 2.
    """
    d = Dc.shape[-1]
    Id = np.eye(d)
    L = Id + 0.5j * dt * Dc
    try:
        S = np.linalg.solve(L, Id - 0.5j * dt * Dc)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"midpoint linear solve failed: {exc}") from exc
    if not np.all(np.isfinite(S)):
        raise SolverError("midpoint linear solve produced non-finite values")
    return S, 0.5 * dt * (S + Id)


def _cayley_solve(Dc: np.ndarray, c: np.ndarray, g: np.ndarray | None, dt: float) -> np.ndarray:
    rhs = c - 0.5j * dt * _bmv(Dc, c)
    if g is not None:
        rhs = rhs + dt * g
    L = np.eye(Dc.shape[-1]) + 0.5j * dt * Dc
    try:
        out = np.linalg.solve(L, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"midpoint linear solve failed: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise SolverError("midpoint linear solve produced non-finite values")
    return out


def midpoint_step(op: ConstrainedDirac, psi: np.ndarray, f_mid: np.ndarray | None, dt: float) -> np.ndarray:
    """One implicit-midpoint step for (d/dt + i D_c) psi = f on node fields."""
    c = op.coords(psi)
    S, G = cayley_matrices(op.Dc, dt)
    c1 = _bmv(S, c)
    if f_mid is not None:
        c1 = c1 + _bmv(G, op.coords(f_mid))
    return op.field(c1)


# -- mollifier / Picard engine -------------------------------------------------


def mollifier_apply(op: ConstrainedDirac, eps: float, c: np.ndarray) -> np.ndarray:
    """J c with J = exp(-eps <D_c>), <x> = sqrt(1 + x^2), on coordinates (B, d)."""
    if eps < 0:
        raise ValueError("mollifier parameter must be nonnegative")
    lam, V = op.eigh
    damp = np.exp(-eps * np.sqrt(1 + lam**2))
    w = np.einsum("bji,bj->bi", V.conj(), c)
    return _bmv(V, damp * w)


def mollified_generator(op: ConstrainedDirac, eps: float) -> tuple[np.ndarray, float]:
    """Matrix J D_c J per block and its operator norm."""
    lam, V = op.eigh
    mu = lam * np.exp(-2 * eps * np.sqrt(1 + lam**2))
    M = np.einsum("bij,bj,bkj->bik", V, mu, V.conj())
    return M, float(np.abs(mu).max())


@dataclass
class PicardLog:
    epsilon: float
    sup_norm: float
    window_steps: int
    iterations: list = field(default_factory=list)
    contraction: list = field(default_factory=list)

    @property
    def max_contraction(self) -> float:
        return max(self.contraction, default=0.0)


def _picard_run(reduction, op0, c0, times, g_of, eps, tol, max_iter):
    """Picard iteration of the integral map on consecutive windows.

    Returns the coordinate history (nt, B, d) and a :class:`PicardLog`.
    """
    dt = float(times[1] - times[0])
    ops = [op0] if reduction.static else [reduction.operator(t) for t in times]
    for op in ops[1:]:
        if not np.array_equal(op.Q, op0.Q):
            raise SolverError("Picard engine requires a time-independent constraint basis")
    gens = [mollified_generator(op, eps) for op in ops]
    sup = max(n for _, n in gens)
    if abs(dt) * sup >= 1.0:
        raise SolverError(
            f"Picard map is not a contraction: |dt| * sup|JDJ| = {abs(dt) * sup:.3g} >= 1"
        )
    m = max(1, int(np.floor(0.5 / (abs(dt) * sup)))) if sup > 0 else len(times) - 1
    plog = PicardLog(eps, sup, m)
    nt = len(times)
    hist = np.empty((nt,) + c0.shape, dtype=complex)
    hist[0] = c0
    gsrc = np.array([g_of(t) for t in times]) if g_of is not None else np.zeros((nt,) + c0.shape, complex)

    def M_at(j):
        return gens[0][0] if reduction.static else gens[j][0]

    start = 0
    while start < nt - 1:
        stop = min(nt - 1, start + m)
        idx = np.arange(start, stop + 1)
        Ms = [M_at(j) for j in idx]
        u0 = hist[start]
        u = np.broadcast_to(u0, (len(idx),) + u0.shape).copy()
        prev = None
        for it in range(1, max_iter + 1):
            g = gsrc[idx] - 1j * np.stack([_bmv(M, uj) for M, uj in zip(Ms, u)])
            incr = 0.5 * dt * (g[1:] + g[:-1])
            new = np.empty_like(u)
            new[0] = u0
            new[1:] = u0 + np.cumsum(incr, axis=0)
            diff = float(np.abs(new - u).max())
            scale = max(1.0, float(np.abs(new).max()))
            if prev is not None and prev > 1e3 * tol * scale:
                plog.contraction.append(diff / prev)
            u, prev = new, diff
            if diff <= tol * scale:
                break
        else:
            raise SolverError(f"Picard iteration cap {max_iter} reached (last increment {prev:.3g})")
        plog.iterations.append(it)
        hist[idx] = u
        start = stop
    return hist, plog


# -- driver --------------------------------------------------------------------


def _coords_source(op: ConstrainedDirac, source: Source | None, t: float):
    if source is None:
        return None
    return op.coords(source(t))


def evolve(
    reduction: HamiltonianReduction,
    psi0: np.ndarray,
    source: Source | None,
    t0: float,
    t1: float,
    config: EvolutionConfig,
    epsilon: float | None = None,
) -> SolveResult:
    """Integrate the reduced equation from t0 to t1 (t1 < t0 runs backward)."""
    mesh = reduction.mesh
    times = time_grid(t0, t1, config.dt)
    dt = float(times[1] - times[0])
    op = reduction.operator(times[0])
    psi0 = np.asarray(psi0, dtype=complex).reshape(mesh.field_shape)
    c = op.coords(psi0)
    scale0 = reduction.norm(psi0)
    proj = reduction.norm(op.field(c) - psi0) / scale0 if scale0 > 0 else 0.0
    if proj > 1e-10:
        raise ValueError(f"initial datum violates the boundary condition (relative residual {proj:.3g})")
    save = list(range(0, len(times), config.save_every))
    if save[-1] != len(times) - 1:
        save.append(len(times) - 1)
    fields = np.empty((len(save),) + mesh.field_shape, dtype=complex)
    norms = np.empty(len(save))
    flux = np.empty(len(save))
    snorm = np.zeros(len(save))
    slot = {k: j for j, k in enumerate(save)}

    def record(k, op_k, ck):
        j = slot[k]
        fields[j] = op_k.field(ck)
        norms[j] = float(np.linalg.norm(ck))
        flux[j] = abs(boundary_flux_density(op_k.assembly, fields[j], fields[j]))
        if source is not None:
            snorm[j] = reduction.norm(source(times[k]))

    meta = {"scheme": config.scheme, "dt": dt, "n_steps": len(times) - 1, "t0": float(t0), "t1": float(t1)}
    basis_resid = 0.0

    if config.scheme == "midpoint" and epsilon is None and reduction.static:
        # static generator: the Cayley map is diagonal in the eigenbasis of D_c
        lam, V = op.eigh
        Vh = np.conj(np.swapaxes(V, -1, -2))
        den = 1 + 0.5j * dt * lam
        phase, gain = (1 - 0.5j * dt * lam) / den, dt / den
        w = _bmv(Vh, c)
        record(0, op, c)
        for k in range(len(times) - 1):
            w = phase * w
            if source is not None:
                w = w + gain * _bmv(Vh, op.coords(source(0.5 * (times[k] + times[k + 1]))))
            if k + 1 in slot:
                record(k + 1, op, _bmv(V, w))
    elif config.scheme == "midpoint" and epsilon is None:
        record(0, op, c)
        for k in range(len(times) - 1):
            tm = 0.5 * (times[k] + times[k + 1])
            op_m = reduction.operator(tm)
            if op_m.Q is not op.Q and not np.array_equal(op_m.Q, op.Q):
                # re-expand in the midpoint basis
                v = _bmv(op.Q, c)
                c = _bmv(np.conj(np.swapaxes(op_m.Q, -1, -2)), op_m.bw * v)
                basis_resid = max(basis_resid, float(np.abs(_bmv(op_m.Q, c) - v).max()))
            c = _cayley_solve(op_m.Dc, c, _coords_source(op_m, source, tm), dt)
            op = op_m
            if k + 1 in slot:
                record(k + 1, op, c)
        meta["basis_residual"] = basis_resid
    else:
        eps = float(config.epsilon_schedule[-1] if epsilon is None else epsilon)
        g_of = None if source is None else (lambda t: op.coords(source(t)))
        hist, plog = _picard_run(
            reduction, op, c, times, g_of, eps, config.picard_tol, config.picard_max_iter
        )
        for k in save:
            record(k, op, hist[k])
        meta.update(
            scheme="mollified_picard",
            epsilon=eps,
            sup_norm_JDJ=plog.sup_norm,
            window_steps=plog.window_steps,
            picard_iterations=plog.iterations,
            max_contraction=plog.max_contraction,
        )
        log.info(
            "picard eps=%g sup|JDJ|=%.4g window=%d max_iter=%d contraction=%.3f",
            eps, plog.sup_norm, plog.window_steps, max(plog.iterations), plog.max_contraction,
        )

    st_times = times[save]
    if fields.shape[0]:
        fields[0] = psi0
    meta["projection_residual"] = proj
    return SolveResult(st_times, fields, norms, flux, snorm, reduction, meta=meta)


def _check_data_support(mesh: Mesh, psi0: np.ndarray):
    bd = mesh.boundary_mask()
    if np.any(np.abs(psi0[bd]) > 0):
        raise ValueError("initial datum must vanish on the boundary")


def solve_cauchy(
    st: FoliatedSpacetime,
    rep: CliffordRep,
    mesh: Mesh,
    psi0: np.ndarray,
    f: Source | None,
    config: EvolutionConfig,
    boundary: dict | None = None,
    t_end: float | None = None,
    epsilon: float | None = None,
) -> SolveResult:
    """Physical-picture Cauchy solve on [0, t_end] (default: end of the time window).

    Pipeline: conformal rescaling to unit lapse, Hamiltonian reduction, time
    stepping, then the inverse maps back to the original spacetime.
    """
    bd = np.array(st.domain)
    ts = np.linspace(*st.time_window, 17)
    dev = max(float(np.abs(st.lapse_values(t, bd) - 1.0).max()) for t in ts)
    if dev > BOUNDARY_LAPSE_TOL:
        raise AssumptionError(f"lapse must equal 1 on the boundary (deviation {dev:.3g})")
    reduced, maps = conformal_reduce(st)
    report = validate_assumptions(reduced)
    if not report.passed:
        names = ", ".join(c.name for c in report.failures())
        raise AssumptionError(f"standing assumptions violated: {names}")
    tags = dict(st.boundary)
    tags.update(boundary or {})
    red = hamiltonian_reduce(reduced, rep, mesh, tags)
    x = mesh.x
    psi0 = np.asarray(psi0, dtype=complex).reshape(mesh.field_shape)
    _check_data_support(mesh, psi0)
    psi0_t = red.forward(0.0, maps.forward_spinor(0.0, x, psi0))

    src = None
    if f is not None:
        def src(t):
            return red.source(t, maps.forward_source(t, x, f(t)))

    t1 = st.time_window[1] if t_end is None else t_end
    res = evolve(red, psi0_t, src, 0.0, t1, config, epsilon=epsilon)
    res.maps = maps
    res.meta["assumptions"] = {c.name: c.passed for c in report.checks}
    if f is not None:
        w = mesh.sbp_weights * mesh.dtheta
        res.meta["physical_source_norms"] = np.array(
            [np.sqrt(np.sum(_expand(w * st.sqrt_det_h(t, x), f(t)) * np.abs(f(t)) ** 2)) for t in res.times]
        )
    if config.store_physical:
        phys = np.empty_like(res.reduced)
        for j, t in enumerate(res.times):
            phys[j] = maps.backward_spinor(t, x, red.inverse(t, res.reduced[j]))
        phys[0] = psi0
        res.physical = phys
    return res


@dataclass
class PicardReplay:
    results: dict  # eps -> SolveResult
    differences: list  # ||psi^{eps_j} - psi^{eps_{j+1}}||_inf
    limit: np.ndarray  # extrapolated final reduced state
    logs: dict


def mollified_picard_solve(
    reduction: HamiltonianReduction,
    psi0: np.ndarray,
    source: Source | None,
    t0: float,
    t1: float,
    config: EvolutionConfig,
) -> PicardReplay:
    results, logs = {}, {}
    for eps in config.epsilon_schedule:
        r = evolve(reduction, psi0, source, t0, t1, config, epsilon=eps)
        results[eps] = r
        logs[eps] = {k: r.meta[k] for k in ("sup_norm_JDJ", "window_steps", "picard_iterations", "max_contraction")}
    eps = list(config.epsilon_schedule)
    diffs = [
        float(np.abs(results[a].reduced - results[b].reduced).max()) for a, b in zip(eps, eps[1:])
    ]
    last = results[eps[-1]].reduced[-1]
    if len(eps) > 1:
        prev = results[eps[-2]].reduced[-1]
        # first-order extrapolation in eps
        limit = last + (last - prev) * eps[-1] / (eps[-2] - eps[-1])
    else:
        limit = last.copy()
    return PicardReplay(results, diffs, limit, logs)


# -- Green operators and residuals --------------------------------------------


def reduced_residual(reduction: HamiltonianReduction, times: np.ndarray, hist: np.ndarray,
                     source: Source | None) -> np.ndarray:
    """r(t) = d/dt psi~ + i Dt~_c psi~ - f~ with second-order time differences."""
    dpsi = np.gradient(hist, times, axis=0, edge_order=2)
    out = np.empty_like(hist)
    for j, t in enumerate(times):
        op = reduction.operator(t)
        out[j] = dpsi[j] + 1j * op.apply(hist[j])
        if source is not None:
            out[j] -= op.project(source(t))
    return out


def spacetime_norm(reduction: HamiltonianReduction, times: np.ndarray, hist: np.ndarray) -> float:
    """Trapezoid-in-time L2 norm with the W_0 spatial weight."""
    sq = np.array([reduction.norm(h) ** 2 for h in hist])
    return float(np.sqrt(abs(np.trapezoid(sq, times))))


@dataclass
class GreenSolution:
    times: np.ndarray
    field: np.ndarray
    t_slice: float
    direction: int


class GreenOperators:
    """Retarded/advanced solution operators of the reduced constrained equation."""

    def __init__(self, reduction: HamiltonianReduction, config: EvolutionConfig):
        self.reduction = reduction
        self.config = config

    @property
    def window(self) -> tuple[float, float]:
        return self.reduction.spacetime.time_window

    def _solve(self, f: Source, support: tuple[float, float], direction: int) -> GreenSolution:
        ta, tb = self.window
        dt = self.config.dt
        if direction > 0:
            t_s, t_e = support[0] - 2 * dt, tb
            if t_s < ta:
                raise ValueError("time window too short to place the zero-data slice before supp f")
        else:
            t_s, t_e = support[1] + 2 * dt, ta
            if t_s > tb:
                raise ValueError("time window too short to place the zero-data slice after supp f")
        zero = np.zeros(self.reduction.mesh.field_shape, dtype=complex)
        cfg = EvolutionConfig(dt=dt, scheme="midpoint", store_physical=False)
        res = evolve(self.reduction, zero, f, t_s, t_e, cfg)
        times, hist = res.times, res.reduced
        if direction < 0:
            times, hist = times[::-1], hist[::-1]
        return GreenSolution(times, hist, t_s, direction)

    def plus(self, f: Source, support: tuple[float, float]) -> GreenSolution:
        return self._solve(f, support, +1)

    def minus(self, f: Source, support: tuple[float, float]) -> GreenSolution:
        return self._solve(f, support, -1)

    def source_history(self, f: Source, times: np.ndarray) -> np.ndarray:
        return np.array([self.reduction.operator(t).project(f(t)) for t in times])

    def right_inverse_residual(self, f: Source, support, direction: int = 1) -> float:
        """||D G f - f|| / ||f|| on the solution grid."""
        sol = self._solve(f, support, direction)
        r = reduced_residual(self.reduction, sol.times, sol.field, f)
        fh = self.source_history(f, sol.times)
        return spacetime_norm(self.reduction, sol.times, r) / spacetime_norm(self.reduction, sol.times, fh)

    def left_inverse_residual(self, psi: Callable[[float], np.ndarray], dpsi: Callable[[float], np.ndarray],
                              support, direction: int = 1) -> float:
        """||G D psi - psi|| / ||psi|| for psi compactly supported in time.

        ``psi`` and its exact time derivative ``dpsi`` are node-field callables
        taking values in the constraint subspace.
        """

        def f(t):
            return dpsi(t) + 1j * self.reduction.operator(t).apply(psi(t))

        sol = self._solve(f, support, direction)
        ref = np.array([psi(t) for t in sol.times])
        return spacetime_norm(self.reduction, sol.times, sol.field - ref) / spacetime_norm(
            self.reduction, sol.times, ref
        )


def green_plus(reduction: HamiltonianReduction, f: Source, support, config: EvolutionConfig) -> GreenSolution:
    return GreenOperators(reduction, config).plus(f, support)


def green_minus(reduction: HamiltonianReduction, f: Source, support, config: EvolutionConfig) -> GreenSolution:
    return GreenOperators(reduction, config).minus(f, support)


# -- weak formulation ------------------------------------------------------------


def _trapz_pairing(reduction: HamiltonianReduction, times, a, b) -> complex:
    """int <a, gamma_0 b>_{W_0} dt (indefinite pairing, trapezoid in time)."""
    g0 = reduction.rep.gamma[0]
    w = reduction.weight0
    vals = []
    for u, v in zip(a, b):
        gv = np.einsum("st,...t->...s", g0, v)
        vals.append(weighted_inner(reduction.mesh, w, u, gv))
    return complex(np.trapezoid(np.array(vals), times))


def weak_identity(reduction: HamiltonianReduction, times: np.ndarray, psi: np.ndarray,
                  f_tilde: np.ndarray, phi: np.ndarray, dphi: np.ndarray) -> tuple[complex, complex, float]:
    """Both sides of (phi, f) = (D^dagger phi, psi) with D^dagger = -D_M.

    All histories live in the reduced picture: ``psi`` is psi~, ``f_tilde`` the
    reduced source, ``phi`` a test field in the constraint subspace with exact
    time derivative ``dphi``.  Under the identification U the reduced form of
    D_M is -gamma_0 (d/dt + i Dt~), and U f = -gamma_0 f~.  Returns
    (lhs, rhs, scale) with scale = ||phi|| (||f|| + ||psi||).
    """
    g0 = reduction.rep.gamma[0]
    Uf = -np.einsum("st,...t->...s", g0, f_tilde)
    lhs = _trapz_pairing(reduction, times, phi, Uf)
    Dphi = np.empty_like(phi)
    for j, t in enumerate(times):
        op = reduction.operator(t)
        Dphi[j] = -np.einsum("st,...t->...s", g0, dphi[j] + 1j * op.apply(phi[j]))
    rhs = _trapz_pairing(reduction, times, -Dphi, psi)
    scale = spacetime_norm(reduction, times, phi) * (
        spacetime_norm(reduction, times, f_tilde) + spacetime_norm(reduction, times, psi)
    )
    return lhs, rhs, scale
