"""Weak-solution identity (phi, f) = (D^dagger phi, psi) against random admissible test fields.

    python3 scripts/weak_identity.py [--fields 20]
"""

import argparse

import numpy as np

from apsdirac.data import BumpData, time_bump, time_bump_derivative
from apsdirac.dirac import build_mesh
from apsdirac.evolution import EvolutionConfig, evolve, hamiltonian_reduce, weak_identity
from apsdirac.geometry import annulus
from apsdirac.spin import build_rep

LEVELS = ((17, 16, 50), (33, 32, 100))


def test_field(red, times, rng):
    """Low-mode random field, projected onto the constraint space and cut off in time."""
    m = red.mesh
    lo, hi = m.x[0], m.x[-1]
    a = rng.normal(size=(4, 4, 2)) + 1j * rng.normal(size=(4, 4, 2))
    r = (m.x - lo)[:, None] / (hi - lo)
    th = m.theta[None, :]
    base = sum(a[i, j] * (np.sin(np.pi * (i + 1) * r) * np.exp(1j * (j - 1.5) * th))[..., None]
               for i in range(4) for j in range(4))
    proj = [red.operator(t).project(base) for t in times]
    ph = np.array([time_bump(t, 0.1, 0.9) * u for t, u in zip(times, proj)])
    dph = np.array([time_bump_derivative(t, 0.1, 0.9) * u for t, u in zip(times, proj)])
    return ph, dph


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--fields", type=int, default=20)
    a = p.parse_args()
    st = annulus(1, 2, "sin_warp", {"f0": 0.5, "beta": 0.2}, boundary={"inner": "MIT"})
    rep = build_rep(2)
    for I, K, n in LEVELS:
        m = build_mesh(st, I, K)
        red = hamiltonian_reduce(st, rep, m)
        sp = BumpData((1.5, 3.0), 0.3, (1, 0), profile="bump").values(st, m)

        def src(t):
            return time_bump(t, 0.1, 0.5) * sp

        res = evolve(red, np.zeros(m.field_shape, complex), src, 0, 1, EvolutionConfig(dt=1 / n))
        ft = np.array([src(t) for t in res.times])
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(a.fields):
            ph, dph = test_field(red, res.times, rng)
            lhs, rhs, scale = weak_identity(red, res.times, res.reduced, ft, ph, dph)
            worst = max(worst, abs(lhs - rhs) / scale)
        print(f"I={I:3d} K={K:3d} steps={n:4d}  max relative defect {worst:.3g}")


if __name__ == "__main__":
    main()
