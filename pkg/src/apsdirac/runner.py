"""Config-driven pipelines shared by the CLI and the experiment scripts."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .boundary import assemble_adapted_operator, build_specs, constrain_operator, kernel_check
from .config import RunConfig
from .data import BumpData, time_bump
from .diagnostics import convergence_study, energy, relative_flux, support_mass
from .dirac import Mesh, assemble_spatial_dirac, build_mesh
from .errors import AssumptionError
from .evolution import (
    EvolutionConfig,
    GreenOperators,
    SolveResult,
    hamiltonian_reduce,
    solve_cauchy,
)
from .geometry import FoliatedSpacetime, conformal_reduce, lapse_family, validate_assumptions, warp_family
from .spin import build_rep


def build_spacetime(cfg: RunConfig) -> FoliatedSpacetime:
    g = cfg.geometry
    domain = tuple(float(v) for v in g.domain)
    return FoliatedSpacetime(
        spatial_dim=g.dim,
        domain=domain,
        scale=warp_family(g.family, g.dim, domain, g.params),
        lapse=lapse_family(g.lapse, domain, g.lapse_params),
        time_window=tuple(float(v) for v in g.window),
        boundary=dict(cfg.boundary),
        name=g.family,
    )


def build_config_mesh(cfg: RunConfig, st: FoliatedSpacetime, scale: int = 1) -> Mesh:
    g = cfg.geometry
    I = (g.I - 1) * scale + 1
    K = g.K * scale if g.dim == 2 else None
    return build_mesh(st, I, K, spin_structure=g.spin_structure)


def evolution_config(cfg: RunConfig, dt: float | None = None, save_every: int | None = None) -> EvolutionConfig:
    s = cfg.scheme
    return EvolutionConfig(
        dt=float(dt if dt is not None else s.dt),
        scheme=s.scheme,
        epsilon_schedule=tuple(s.epsilon_schedule),
        picard_tol=float(s.picard_tol),
        picard_max_iter=int(s.picard_max_iter),
        save_every=int(save_every if save_every is not None else s.save_every),
    )


def initial_datum(cfg: RunConfig, st: FoliatedSpacetime, mesh: Mesh, rng: np.random.Generator) -> tuple:
    d = cfg.data
    if d.profile == "zero":
        return np.zeros(mesh.field_shape, dtype=complex), None
    if d.random_polarization:
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        pol = tuple(v / np.linalg.norm(v))
    else:
        pol = tuple(complex(a, b) for a, b in zip(d.polarization, d.polarization_im))
    bump = BumpData(tuple(d.center), float(d.radius), pol, profile=d.profile)
    return bump.values(st, mesh), bump


def source_term(cfg: RunConfig, st: FoliatedSpacetime, mesh: Mesh):
    d = cfg.data
    if d.source == "none":
        return None, None
    profile = "bump" if d.source == "bump" else "gaussian"
    sp = BumpData(tuple(d.source_center), float(d.source_radius), tuple(d.source_polarization), profile=profile)
    spatial = sp.values(st, mesh)
    lo, hi = (float(v) for v in d.source_window)

    def f(t):
        return time_bump(t, lo, hi) * spatial

    return f, (lo, hi)


def run_validate(cfg: RunConfig, samples: int = 5) -> dict:
    """Assumption report plus boundary kernel checks at a few sample times."""
    st = build_spacetime(cfg)
    report = validate_assumptions(st)
    out = {"assumptions": {c.name: {"passed": c.passed, "violation": c.violation} for c in report.checks}}
    bd_dev = report["boundary_lapse"]
    if not bd_dev.passed:
        raise AssumptionError(f"lapse differs from 1 on the boundary (max deviation {bd_dev.violation:.3g})")
    reduced, _ = conformal_reduce(st)
    red_report = validate_assumptions(reduced)
    out["reduced_assumptions"] = {c.name: c.passed for c in red_report.checks}
    if not red_report.passed:
        names = ", ".join(c.name for c in red_report.failures())
        raise AssumptionError(f"standing assumptions violated: {names}")
    mesh = build_config_mesh(cfg, reduced)
    rep = build_rep(cfg.geometry.dim)
    kernels = []
    for t in np.linspace(*st.time_window, samples):
        a = assemble_spatial_dirac(reduced, rep, mesh, float(t))
        for comp, tag in cfg.boundary.items():
            if tag != "APS":
                continue
            kr = kernel_check(assemble_adapted_operator(a, comp))
            kernels.append({"t": float(t), "component": comp, "passed": kr.passed,
                            "min_abs_eigenvalue": kr.min_abs_eigenvalue})
    out["kernel"] = kernels
    out["passed"] = True
    return out


def run_spectrum(cfg: RunConfig, t: float = 0.0) -> dict:
    """Adapted-operator spectra per component/mode and the constrained D spectrum."""
    st = build_spacetime(cfg)
    reduced, _ = conformal_reduce(st)
    mesh = build_config_mesh(cfg, reduced)
    rep = build_rep(cfg.geometry.dim)
    a = assemble_spatial_dirac(reduced, rep, mesh, t)
    specs = build_specs(a, cfg.boundary)
    rows = []
    for comp in sorted(cfg.boundary):
        A = assemble_adapted_operator(a, comp)
        lam = np.linalg.eigvalsh(A.mode_blocks)
        for b, nu in enumerate(mesh.nu):
            for v in lam[b]:
                rows.append((comp, float(nu), float(v)))
    op = constrain_operator(a, specs)
    dc = np.sort(op.eigh[0].ravel())
    return {"boundary": rows, "dirac": dc.tolist(), "hermiticity_residual": op.hermiticity_residual}


def run_solve(cfg: RunConfig, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    st = build_spacetime(cfg)
    reduced, _ = conformal_reduce(st)
    mesh = build_config_mesh(cfg, reduced)
    rep = build_rep(cfg.geometry.dim)
    psi0, bump = initial_datum(cfg, st, mesh, rng)
    f, _ = source_term(cfg, st, mesh)
    ecfg = evolution_config(cfg)
    if cfg.scheme.scheme == "mollified_picard":
        # replay the whole epsilon schedule and compare each against the midpoint run
        mid = solve_cauchy(st, rep, mesh, psi0, f, replace(ecfg, scheme="midpoint"), t_end=cfg.t_end)
        logs, diffs = {}, {}
        for eps in ecfg.epsilon_schedule:
            res = solve_cauchy(st, rep, mesh, psi0, f, ecfg, t_end=cfg.t_end, epsilon=eps)
            logs[repr(eps)] = {k: res.meta[k] for k in ("sup_norm_JDJ", "window_steps", "max_contraction")}
            diffs[repr(eps)] = float(np.abs(res.reduced - mid.reduced).max())
        extra = {"picard": logs, "difference_to_midpoint": diffs}
    else:
        res = solve_cauchy(st, rep, mesh, psi0, f, ecfg, t_end=cfg.t_end)
        extra = {}
    summary = summarize(cfg, res, bump, f is not None)
    summary.update(extra)
    return {"result": res, "mesh": mesh, "summary": summary}


def summarize(cfg: RunConfig, res: SolveResult, bump, has_source: bool) -> dict:
    diags = set(cfg.output.diagnostics)
    n0 = float(res.norms[0])
    drift = float(np.abs(res.norms - n0).max() / n0) if n0 > 0 else 0.0
    out = {
        "n_steps": res.n_steps,
        "dt": float(res.meta["dt"]),
        "scheme": res.meta["scheme"],
        "norm_initial": n0,
        "norm_final": float(res.norms[-1]),
        "norm_drift": drift,
    }
    checks = {}
    if "flux" in diags:
        out["flux_relative"] = relative_flux(res) if np.any(res.norms > 0) else 0.0
        checks["flux"] = out["flux_relative"] <= 1e-11
    if "energy" in diags:
        er = energy(res)
        out["gronwall_C"] = er.C
        out["energy_feasible"] = er.feasible
        checks["energy"] = er.feasible
        out["energy_series"] = er
    if not has_source and res.meta["scheme"] == "midpoint":
        checks["norm_conservation"] = drift <= 1e-10
    if "support" in diags and bump is not None:
        sr = support_mass(res, bump.center, bump.radius)
        out["support_contact_time"] = sr.contact_time
        out["support_leakage_before_contact"] = sr.max_leakage(before_contact=True)
        out["support_series"] = sr
    out["checks"] = checks
    out["passed"] = all(checks.values())
    return out


def run_green(cfg: RunConfig) -> dict:
    st = build_spacetime(cfg)
    reduced, maps = conformal_reduce(st)
    mesh = build_config_mesh(cfg, reduced)
    rep = build_rep(cfg.geometry.dim)
    red = hamiltonian_reduce(reduced, rep, mesh, dict(cfg.boundary))
    f, support = source_term(cfg, st, mesh)
    if f is None:
        raise AssumptionError("green requires a source term ([data].source)")

    def ft(t):
        return red.source(t, maps.forward_source(t, mesh.x, f(t)))

    go = GreenOperators(red, evolution_config(cfg))
    out = {}
    for name, sgn in (("plus", 1), ("minus", -1)):
        out[name] = {"right_inverse_residual": go.right_inverse_residual(ft, support, sgn)}
    return out


def run_study(cfg: RunConfig, parallel: bool = False) -> dict:
    """Self-convergence study over [study].resolutions (nested I, K, steps)."""
    st = build_spacetime(cfg)
    rep = build_rep(cfg.geometry.dim)
    t_end = cfg.t_end
    rng = np.random.default_rng(0)

    def run(res):
        I, K, steps = res
        mesh = build_mesh(st, I, K if cfg.geometry.dim == 2 else None, spin_structure=cfg.geometry.spin_structure)
        psi0, _ = initial_datum(cfg, st, mesh, rng)
        f, _ = source_term(cfg, st, mesh)
        ecfg = evolution_config(cfg, dt=t_end / steps, save_every=steps)
        r = solve_cauchy(st, rep, mesh, psi0, f, ecfg, t_end=t_end)
        w = mesh.sbp_weights * st.sqrt_det_h(t_end, mesh.x) * mesh.dtheta
        return r.physical[-1], mesh, w

    levels = [tuple(r) for r in cfg.study.resolutions]
    if len(levels) < 3:
        raise AssumptionError("study needs at least three resolutions")
    if parallel:
        with ThreadPoolExecutor() as ex:
            sols = list(ex.map(run, levels))
        cache = dict(zip(levels, sols))
        report = convergence_study(lambda r: cache[r], levels)
    else:
        report = convergence_study(run, levels)
    d = report.to_dict()
    d["orders_finite"] = all(math.isfinite(o) for o in report.orders)
    return d
