"""Model foliated spacetimes g = -N^2 dt^2 + h_t with timelike boundary.

Two Cauchy surfaces are supported:

* n = 1: the interval [lo, hi] with h_t = (Omega a)^2 dx^2;
* n = 2: the annulus [lo, hi] x S^1 with h_t = Omega^2 (dr^2 + f^2 dtheta^2).

``scale`` is a(t, x) or f(t, r); ``conformal`` is the factor Omega(t, x)
produced by :func:`conformal_reduce` (identically one for user-built
geometries).  All callables are vectorised over ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import AssumptionError

ScalarField = Callable[[float, np.ndarray], np.ndarray]

BOUNDARY_TAGS = ("APS", "MIT")
FD_STEP = 1e-5
BOUNDARY_LAPSE_TOL = 1e-12


def boundary_components(n: int) -> tuple[str, str]:
    return ("left", "right") if n == 1 else ("inner", "outer")


@dataclass(frozen=True)
class FoliatedSpacetime:
    spatial_dim: int
    domain: tuple[float, float]
    scale: ScalarField
    time_window: tuple[float, float] = (0.0, 1.0)
    lapse: ScalarField | None = None
    conformal: ScalarField | None = None
    boundary: dict = field(default_factory=dict)
    name: str = "custom"

    def __post_init__(self):
        if self.spatial_dim not in (1, 2):
            raise ValueError(f"spatial_dim must be 1 or 2, got {self.spatial_dim}")
        lo, hi = self.domain
        if not hi > lo:
            raise ValueError(f"empty domain {self.domain}")
        if self.spatial_dim == 2 and lo <= 0:
            # disk topology is excluded; r_in must stay away from the axis
            raise ValueError("annulus requires r_in > 0")
        ta, tb = self.time_window
        if not (ta <= 0.0 <= tb and ta < tb):
            raise ValueError(f"time window {self.time_window} must contain 0")
        comps = boundary_components(self.spatial_dim)
        bc = {c: "APS" for c in comps}
        bc.update(self.boundary)
        for c, tag in bc.items():
            if c not in comps:
                raise ValueError(f"unknown boundary component {c!r}; expected one of {comps}")
            if tag not in BOUNDARY_TAGS:
                raise ValueError(f"unknown boundary condition {tag!r}")
        object.__setattr__(self, "boundary", bc)

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    @property
    def unit_lapse(self) -> bool:
        return self.lapse is None

    def lapse_values(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.lapse is None:
            return np.ones_like(x)
        N = np.broadcast_to(np.asarray(self.lapse(t, x), dtype=float), x.shape).copy()
        # boundary lapse is stored as the constant 1 whenever it is 1 up to round-off
        on_bd = np.isclose(x, self.domain[0], rtol=0, atol=1e-14) | np.isclose(
            x, self.domain[1], rtol=0, atol=1e-14
        )
        snap = on_bd & (np.abs(N - 1.0) <= BOUNDARY_LAPSE_TOL)
        N[snap] = 1.0
        return N

    def scale_values(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.scale(t, x), dtype=float), x.shape).copy()

    def conformal_values(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.conformal is None:
            return np.ones_like(x)
        return np.broadcast_to(np.asarray(self.conformal(t, x), dtype=float), x.shape).copy()

    def sqrt_det_h(self, t: float, x) -> np.ndarray:
        """Volume density of h_t in the (x) or (r, theta) coordinates."""
        om = self.conformal_values(t, x)
        return om**self.spatial_dim * self.scale_values(t, x)


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    violation: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[AssumptionCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[AssumptionCheck]:
        return [c for c in self.checks if not c.passed]


def _sample_grid(st: FoliatedSpacetime, nt: int = 17, nx: int = 65):
    ts = np.linspace(*st.time_window, nt)
    xs = np.linspace(*st.domain, nx)
    return ts, xs


def validate_assumptions(st: FoliatedSpacetime) -> ValidationReport:
    """Check the standing assumptions on a sample grid; never raises."""
    ts, xs = _sample_grid(st)
    lo, hi = st.domain
    bd = np.array([lo, hi])
    checks = []

    nmin = min(float(st.lapse_values(t, xs).min()) for t in ts)
    checks.append(AssumptionCheck("lapse_positive", nmin > 0, max(0.0, -nmin), f"min N = {nmin:.6g}"))

    hmin = min(float(st.sqrt_det_h(t, xs).min()) for t in ts)
    checks.append(AssumptionCheck("metric_positive", hmin > 0, max(0.0, -hmin), f"min sqrt|h| = {hmin:.6g}"))

    dev = max(float(np.abs(st.lapse_values(t, bd) - 1.0).max()) for t in ts)
    checks.append(AssumptionCheck("boundary_lapse", dev <= BOUNDARY_LAPSE_TOL, dev, "max |N - 1| on the boundary"))

    # nabla_{e_0} e_n = e_n(log N) e_0 on these product frames: one-sided FD of log N
    h = 1e-6 * st.length
    worst = 0.0
    for t in ts:
        for xb, inward in ((lo, 1.0), (hi, -1.0)):
            pts = xb + inward * h * np.arange(3)
            logN = np.log(np.abs(st.lapse_values(t, pts)) + 1e-300)
            dlog = inward * (-3 * logN[0] + 4 * logN[1] - logN[2]) / (2 * h)
            ds = st.conformal_values(t, np.array([xb]))[0]
            if st.spatial_dim == 1:
                ds *= st.scale_values(t, np.array([xb]))[0]
            worst = max(worst, abs(dlog) / ds)
    checks.append(
        AssumptionCheck("normal_transport", worst <= 1e-6, worst, "|nabla_{e_0} e_n| on the boundary")
    )
    checks.append(AssumptionCheck("boundary_compact", True, 0.0, "boundary is a finite set of points/circles"))
    return ValidationReport(checks)


def _require_unit_lapse(st: FoliatedSpacetime):
    if st.lapse is None:
        return
    ts, xs = _sample_grid(st)
    if any(np.abs(st.lapse_values(t, xs) - 1.0).max() > 0 for t in ts):
        raise ValueError("operation requires unit lapse; apply conformal_reduce first")


def mean_curvature(st: FoliatedSpacetime, t: float, x) -> np.ndarray:
    """H_t = -(1/n) d/dt log sqrt|h_t|, by central differences."""
    _require_unit_lapse(st)
    h = FD_STEP
    lp = np.log(st.sqrt_det_h(t + h, x))
    lm = np.log(st.sqrt_det_h(t - h, x))
    return -(lp - lm) / (2 * h) / st.spatial_dim


def density_factor(st: FoliatedSpacetime, t: float, x) -> np.ndarray:
    """rho_t = (|h_t| / |h_0|)^(1/4)."""
    _require_unit_lapse(st)
    return np.sqrt(st.sqrt_det_h(t, x) / st.sqrt_det_h(0.0, x))


@dataclass(frozen=True)
class WeightMaps:
    """Transport of spinors and sources between the lapse-N and unit-lapse pictures."""

    original: FoliatedSpacetime

    @property
    def spinor_exponent(self) -> float:
        return self.original.spatial_dim / 2

    @property
    def source_exponent(self) -> float:
        return (self.original.spatial_dim + 2) / 2

    def spinor_weight(self, t: float, x) -> np.ndarray:
        return self.original.lapse_values(t, x) ** self.spinor_exponent

    def source_weight(self, t: float, x) -> np.ndarray:
        return self.original.lapse_values(t, x) ** self.source_exponent

    def forward_spinor(self, t, x, psi):
        return _scale_nodes(self.spinor_weight(t, x), psi)

    def backward_spinor(self, t, x, psi):
        return _scale_nodes(1.0 / self.spinor_weight(t, x), psi)

    def forward_source(self, t, x, f):
        return _scale_nodes(self.source_weight(t, x), f)

    def backward_source(self, t, x, f):
        return _scale_nodes(1.0 / self.source_weight(t, x), f)


def _scale_nodes(w: np.ndarray, field: np.ndarray) -> np.ndarray:
    field = np.asarray(field)
    return field * w.reshape(w.shape + (1,) * (field.ndim - w.ndim))


def conformal_reduce(st: FoliatedSpacetime) -> tuple[FoliatedSpacetime, WeightMaps]:
    """Rescale g -> N^-2 g; the result has unit lapse and spatial metric N^-2 h_t."""
    ts, _ = _sample_grid(st)
    bd = np.array(st.domain)
    dev = max(float(np.abs(st.lapse_values(t, bd) - 1.0).max()) for t in ts)
    if dev > BOUNDARY_LAPSE_TOL:
        raise AssumptionError(
            f"lapse differs from 1 on the boundary (max deviation {dev:.3g}); "
            "the rescaling would not preserve the boundary condition"
        )
    maps = WeightMaps(st)
    if st.lapse is None:
        return st, maps
    def omega(t, x, _st=st):
        return _st.conformal_values(t, x) / _st.lapse_values(t, x)

    reduced = replace(st, lapse=None, conformal=omega, name=st.name + "+reduced")
    return reduced, maps


# -- closed-form families ---------------------------------------------------


def _base(n, params):
    if n == 1:
        a0 = float(params.get("a0", 1.0))
        return lambda x: a0 + 0.0 * x
    f0 = float(params.get("f0", 1.0))
    f1 = float(params.get("f1", 0.0))
    return lambda x: f0 + f1 * x


def warp_family(name: str, n: int, domain, params: dict | None = None) -> ScalarField:
    """Closed-form scale functions selectable by name.

    static       base(x)
    exp_warp     base(x) * exp(alpha t)
    sin_warp     base(x) * (1 + beta sin(omega t) sin(pi (x - lo) / L))
    linear_warp  base(x) * (1 + beta t (x - lo)(hi - x) / L^2)
    """
    params = dict(params or {})
    lo, hi = domain
    L = hi - lo
    base = _base(n, params)
    if name == "static":
        return lambda t, x: base(x)
    if name == "exp_warp":
        alpha = float(params.get("alpha", 0.1))
        return lambda t, x: base(x) * np.exp(alpha * t)
    if name == "sin_warp":
        beta = float(params.get("beta", 0.1))
        omega = float(params.get("omega", 1.0))
        return lambda t, x: base(x) * (1 + beta * np.sin(omega * t) * np.sin(np.pi * (x - lo) / L))
    if name == "linear_warp":
        beta = float(params.get("beta", 0.1))
        return lambda t, x: base(x) * (1 + beta * t * (x - lo) * (hi - x) / L**2)
    raise ValueError(f"unknown geometry family {name!r}")


def lapse_family(name: str, domain, params: dict | None = None) -> ScalarField | None:
    """unit | sin2_bump (N = 1 + g sin^2) | sin_bump (N = 1 + g sin) | cos_bump (N = 1 + g cos)."""
    params = dict(params or {})
    lo, hi = domain
    L = hi - lo
    g = float(params.get("amplitude", 0.5))
    if name == "unit":
        return None
    if name == "sin2_bump":
        return lambda t, x: 1 + g * np.sin(np.pi * (x - lo) / L) ** 2
    if name == "sin_bump":
        return lambda t, x: 1 + g * np.sin(np.pi * (x - lo) / L)
    if name == "cos_bump":
        return lambda t, x: 1 + g * np.cos(np.pi * (x - lo) / L)
    raise ValueError(f"unknown lapse family {name!r}")


def interval(L=1.0, family="static", params=None, lapse="unit", lapse_params=None,
             time_window=(0.0, 1.0), boundary=None) -> FoliatedSpacetime:
    domain = (0.0, float(L))
    return FoliatedSpacetime(
        spatial_dim=1,
        domain=domain,
        scale=warp_family(family, 1, domain, params),
        lapse=lapse_family(lapse, domain, lapse_params),
        time_window=tuple(time_window),
        boundary=dict(boundary or {}),
        name=family,
    )


def annulus(r_in=1.0, r_out=2.0, family="static", params=None, lapse="unit", lapse_params=None,
            time_window=(0.0, 1.0), boundary=None) -> FoliatedSpacetime:
    domain = (float(r_in), float(r_out))
    return FoliatedSpacetime(
        spatial_dim=2,
        domain=domain,
        scale=warp_family(family, 2, domain, params),
        lapse=lapse_family(lapse, domain, lapse_params),
        time_window=tuple(time_window),
        boundary=dict(boundary or {}),
        name=family,
    )
