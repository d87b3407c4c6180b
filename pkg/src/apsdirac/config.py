"""Run configuration: TOML schema, fail-closed validation, canonical echo.

Example::

    [geometry]
    dim = 2
    family = "static"
    params = { f0 = 0.5 }
    domain = [1.0, 4.0]
    I = 64
    K = 64
    window = [0.0, 1.0]

    [boundary]
    inner = "MIT"
    outer = "APS"

    [data]
    profile = "bump"
    center = [2.2, 3.14159]
    radius = 1.0

    [scheme]
    dt = 0.005
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field

import tomli

from .errors import ConfigError
from .geometry import BOUNDARY_TAGS, boundary_components

FAMILIES = ("static", "exp_warp", "sin_warp", "linear_warp")
LAPSES = ("unit", "sin2_bump", "sin_bump", "cos_bump")
PROFILES = ("gaussian", "bump", "zero")
SPIN_STRUCTURES = ("antiperiodic", "periodic")
DIAGNOSTICS = ("energy", "flux", "support")
FORMATS = ("csv", "json", "snapshot")


@dataclass
class GeometryBlock:
    dim: int = 2
    family: str = "static"
    params: dict = field(default_factory=dict)
    domain: tuple = (1.0, 2.0)
    lapse: str = "unit"
    lapse_params: dict = field(default_factory=dict)
    I: int = 32
    K: int = 32
    window: tuple = (0.0, 1.0)
    spin_structure: str = "antiperiodic"


@dataclass
class DataBlock:
    profile: str = "gaussian"
    center: tuple = ()
    radius: float = 0.25
    polarization: tuple = (1.0, 0.0)
    polarization_im: tuple = (0.0, 0.0)
    random_polarization: bool = False
    source: str = "none"
    source_center: tuple = ()
    source_radius: float = 0.2
    source_window: tuple = ()
    source_polarization: tuple = (0.0, 1.0)


@dataclass
class SchemeBlock:
    scheme: str = "midpoint"
    dt: float | None = None
    t_end: float | None = None
    epsilon_schedule: tuple = (0.2, 0.1, 0.05, 0.025)
    picard_tol: float = 1e-12
    picard_max_iter: int = 200
    save_every: int = 1


@dataclass
class OutputBlock:
    directory: str = "out"
    formats: tuple = ("csv", "json")
    diagnostics: tuple = ("energy", "flux")
    assertions: bool = True
    parallel: bool = False


@dataclass
class StudyBlock:
    resolutions: tuple = ()


@dataclass
class RunConfig:
    geometry: GeometryBlock
    boundary: dict
    data: DataBlock
    scheme: SchemeBlock
    output: OutputBlock
    study: StudyBlock

    def to_dict(self) -> dict:
        d = asdict(self)
        return _canon(d)

    @property
    def t_end(self) -> float:
        return self.scheme.t_end if self.scheme.t_end is not None else self.geometry.window[1]


def _canon(x):
    if isinstance(x, dict):
        return {k: _canon(v) for k, v in sorted(x.items())}
    if isinstance(x, (list, tuple)):
        return [_canon(v) for v in x]
    return x


_BLOCKS = {
    "geometry": GeometryBlock,
    "data": DataBlock,
    "scheme": SchemeBlock,
    "output": OutputBlock,
    "study": StudyBlock,
}


def _line_of(text: str, table: str, key: str | None = None) -> int | None:
    """1-based line of ``key`` inside ``[table]`` (or of the header when key is None)."""
    lines = text.splitlines()
    cur = None
    header = None
    for n, raw in enumerate(lines, 1):
        s = raw.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.-]+)\s*\]", s)
        if m:
            cur = m.group(1)
            if cur == table:
                header = n
                if key is None:
                    return n
            continue
        if cur == table and key is not None and re.match(rf"^{re.escape(key)}\s*=", s):
            return n
        if cur is None and key is not None and table == "" and re.match(rf"^{re.escape(key)}\s*=", s):
            return n
    return header


class _Errors:
    def __init__(self, text: str):
        self.text = text
        self.items: list[str] = []

    def add(self, table: str, key: str | None, msg: str):
        line = _line_of(self.text, table, key)
        where = f"line {line}: " if line else ""
        loc = f"[{table}]" + (f".{key}" if key else "")
        self.items.append(f"{where}{loc}: {msg}")


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML run configuration; raises ConfigError with all problems."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"malformed TOML: {exc}"]) from exc
    err = _Errors(text)

    for k in raw:
        if k not in _BLOCKS and k != "boundary":
            err.add("", k, f"unknown section {k!r}")
    if "geometry" not in raw:
        err.add("geometry", None, "missing required section [geometry]")

    blocks = {}
    for name, cls in _BLOCKS.items():
        sect = raw.get(name, {})
        if not isinstance(sect, dict):
            err.add("", name, "must be a table")
            sect = {}
        known = cls.__dataclass_fields__
        kwargs = {}
        for k, v in sect.items():
            if k not in known:
                err.add(name, k, f"unknown key {k!r}")
            else:
                kwargs[k] = tuple(v) if isinstance(v, list) else v
        try:
            blocks[name] = cls(**kwargs)
        except TypeError as exc:
            err.add(name, None, str(exc))
            blocks[name] = cls()

    g: GeometryBlock = blocks["geometry"]
    if g.dim not in (1, 2):
        err.add("geometry", "dim", f"must be 1 or 2, got {g.dim!r}")
        g.dim = 2
    if "geometry" in raw and "domain" not in raw["geometry"]:
        err.add("geometry", "domain", "missing required key 'domain'")
    if g.family not in FAMILIES:
        err.add("geometry", "family", f"unknown geometry family {g.family!r}; expected one of {FAMILIES}")
    if g.lapse not in LAPSES:
        err.add("geometry", "lapse", f"unknown lapse family {g.lapse!r}; expected one of {LAPSES}")
    if g.spin_structure not in SPIN_STRUCTURES:
        err.add("geometry", "spin_structure", f"must be one of {SPIN_STRUCTURES}")
    for key in ("params", "lapse_params"):
        val = getattr(g, key)
        if not isinstance(val, dict) or not all(_num(v) for v in val.values()):
            err.add("geometry", key, "must be a table of numbers")
    if len(g.domain) != 2 or not all(_num(v) for v in g.domain) or not g.domain[1] > g.domain[0]:
        err.add("geometry", "domain", f"must be [lo, hi] with lo < hi, got {list(g.domain)}")
    elif g.dim == 2 and g.domain[0] <= 0:
        err.add("geometry", "domain", "annulus requires r_in > 0")
    if not isinstance(g.I, int) or g.I < 5:
        err.add("geometry", "I", f"must be an integer >= 5, got {g.I!r}")
    if g.dim == 2 and (not isinstance(g.K, int) or g.K < 8 or g.K % 2):
        err.add("geometry", "K", f"must be an even integer >= 8, got {g.K!r}")
    if len(g.window) != 2 or not all(_num(v) for v in g.window):
        err.add("geometry", "window", "must be [t_a, t_b]")
    elif not (g.window[0] <= 0.0 <= g.window[1] and g.window[0] < g.window[1]):
        err.add("geometry", "window", f"time window {list(g.window)} must contain 0 (0 in [t_a, t_b] is required)")

    comps = boundary_components(g.dim)
    bc = {c: "APS" for c in comps}
    for k, v in raw.get("boundary", {}).items():
        if k not in comps:
            err.add("boundary", k, f"unknown boundary component {k!r}; expected one of {comps}")
        elif v not in BOUNDARY_TAGS:
            err.add("boundary", k, f"unknown boundary condition {v!r}; expected one of {BOUNDARY_TAGS}")
        else:
            bc[k] = v

    d: DataBlock = blocks["data"]
    if d.profile not in PROFILES:
        err.add("data", "profile", f"unknown profile {d.profile!r}; expected one of {PROFILES}")
    lo, hi = (g.domain if len(g.domain) == 2 else (0.0, 1.0))
    if not d.center:
        d.center = (0.5 * (lo + hi),) if g.dim == 1 else (0.5 * (lo + hi), math.pi)
    if len(d.center) != g.dim or not all(_num(v) for v in d.center):
        err.add("data", "center", f"must have {g.dim} numbers")
    if not _num(d.radius) or d.radius <= 0:
        err.add("data", "radius", "must be positive")
    for key in ("polarization", "polarization_im", "source_polarization"):
        val = getattr(d, key)
        if len(val) != 2 or not all(_num(v) for v in val):
            err.add("data", key, "must be two numbers")
    if d.source not in ("none", "bump", "gaussian"):
        err.add("data", "source", f"unknown source family {d.source!r}")
    if d.source != "none":
        if not d.source_center:
            d.source_center = d.center
        if not d.source_window:
            ta, tb = g.window
            d.source_window = (ta + 0.1 * (tb - ta), ta + 0.5 * (tb - ta))
        if len(d.source_window) != 2 or not d.source_window[1] > d.source_window[0]:
            err.add("data", "source_window", "must be [t0, t1] with t0 < t1")

    s: SchemeBlock = blocks["scheme"]
    if s.scheme not in ("midpoint", "mollified_picard"):
        err.add("scheme", "scheme", f"unknown scheme {s.scheme!r}")
    T = (g.window[1] - g.window[0]) if len(g.window) == 2 and all(_num(v) for v in g.window) else 1.0
    if s.dt is None:
        s.dt = T / 200
    if not _num(s.dt) or s.dt <= 0:
        err.add("scheme", "dt", "must be positive")
    if s.t_end is not None and (not _num(s.t_end) or not (0 < s.t_end <= g.window[1])):
        err.add("scheme", "t_end", "must lie in (0, t_b]")
    eps = s.epsilon_schedule
    if not eps or not all(_num(e) and e > 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        err.add("scheme", "epsilon_schedule", "must be positive and strictly decreasing")
    if not _num(s.picard_tol) or s.picard_tol <= 0:
        err.add("scheme", "picard_tol", "must be positive")
    if not isinstance(s.picard_max_iter, int) or s.picard_max_iter < 1:
        err.add("scheme", "picard_max_iter", "must be a positive integer")
    if not isinstance(s.save_every, int) or s.save_every < 1:
        err.add("scheme", "save_every", "must be a positive integer")

    o: OutputBlock = blocks["output"]
    for key, allowed in (("formats", FORMATS), ("diagnostics", DIAGNOSTICS)):
        for v in getattr(o, key):
            if v not in allowed:
                err.add("output", key, f"unknown entry {v!r}; expected a subset of {allowed}")

    st_: StudyBlock = blocks["study"]
    res = []
    for r in st_.resolutions:
        r = tuple(r)
        if len(r) != 3 or not all(isinstance(v, int) and v > 0 for v in r):
            err.add("study", "resolutions", f"each entry must be [I, K, steps] of positive integers, got {list(r)}")
        res.append(r)
    st_.resolutions = tuple(res)

    if err.items:
        raise ConfigError(err.items)
    return RunConfig(g, bc, d, s, o, st_)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
