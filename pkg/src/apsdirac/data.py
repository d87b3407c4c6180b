"""Initial data and sources: compactly supported bumps in space and time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dirac import Mesh
from .geometry import FoliatedSpacetime


def smooth_step_bump(s: np.ndarray) -> np.ndarray:
    """C-infinity bump exp(1 - 1/(1 - s^2)) on |s| < 1, zero outside; peak value 1."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
    return out


def time_bump(t, t_lo: float, t_hi: float):
    c, h = 0.5 * (t_lo + t_hi), 0.5 * (t_hi - t_lo)
    return smooth_step_bump((np.asarray(t, dtype=float) - c) / h)


def time_bump_derivative(t, t_lo: float, t_hi: float):
    c, h = 0.5 * (t_lo + t_hi), 0.5 * (t_hi - t_lo)
    s = (np.asarray(t, dtype=float) - c) / h
    b = smooth_step_bump(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(np.abs(s) < 1, -2 * s / (1 - s**2) ** 2, 0.0)
    return b * d / h


@dataclass(frozen=True)
class BumpData:
    """Spinor bump centred at ``center`` (x, or (r, theta)) with support radius ``radius``.

    ``profile`` is ``"bump"`` (C-infinity, compact) or ``"gaussian"`` (width
    radius / 4, truncated at ``radius``).
    """

    center: tuple
    radius: float
    polarization: tuple = (1.0, 0.0)
    profile: str = "gaussian"
    amplitude: float = 1.0

    def distance(self, st: FoliatedSpacetime, mesh: Mesh) -> np.ndarray:
        return support_distance(st, mesh, self.center)

    def values(self, st: FoliatedSpacetime, mesh: Mesh) -> np.ndarray:
        d = self.distance(st, mesh) / self.radius
        if self.profile == "bump":
            s = smooth_step_bump(d)
        elif self.profile == "gaussian":
            s = np.where(d < 1, np.exp(-8.0 * d**2), 0.0)
        else:
            raise ValueError(f"unknown profile {self.profile!r}")
        pol = np.asarray(self.polarization, dtype=complex)
        pol = pol / np.linalg.norm(pol)
        out = self.amplitude * s[..., None] * pol
        out[mesh.boundary_mask()] = 0.0
        return out


def support_distance(st: FoliatedSpacetime, mesh: Mesh, center) -> np.ndarray:
    """Lower bound for the h_0 distance from ``center`` to every node.

    Uses the minimum of the length scale over the slab, so the ball it
    defines contains the true geodesic ball.
    """
    ts = np.linspace(*st.time_window, 9)
    if st.spatial_dim == 1:
        xc = float(np.atleast_1d(center)[0])
        amin = min(float((st.scale_values(t, mesh.x) * st.conformal_values(t, mesh.x)).min()) for t in ts)
        return amin * np.abs(mesh.x - xc)
    rc, thc = center
    fmin = min(float((st.scale_values(t, mesh.x) * st.conformal_values(t, mesh.x)).min()) for t in ts)
    om_min = min(float(st.conformal_values(t, mesh.x).min()) for t in ts)
    dr = om_min * (mesh.x[:, None] - rc)
    dth = np.angle(np.exp(1j * (mesh.theta[None, :] - thc)))
    return np.sqrt(dr**2 + (fmin * dth) ** 2)


def random_polarization(rng: np.random.Generator) -> tuple:
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return tuple(v / np.linalg.norm(v))
