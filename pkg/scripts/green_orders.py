"""Right- and left-inverse residuals of the retarded/advanced Green operators under refinement.

    python3 scripts/green_orders.py [--family exp_warp]
"""

import argparse

import numpy as np

from apsdirac.data import BumpData, time_bump, time_bump_derivative
from apsdirac.dirac import build_mesh
from apsdirac.evolution import EvolutionConfig, GreenOperators, hamiltonian_reduce
from apsdirac.geometry import annulus
from apsdirac.spin import build_rep

LEVELS = ((17, 16, 40), (33, 32, 80), (65, 64, 160))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--family", default="static", choices=("static", "exp_warp", "sin_warp", "linear_warp"))
    a = p.parse_args()
    st = annulus(1, 2, a.family, {"f0": 0.5}, boundary={"inner": "MIT"})
    rep = build_rep(2)
    rows = []
    print(f"{'I':>4} {'K':>4} {'steps':>5} {'DG+f':>8} {'DG-f':>8} {'G+Dpsi':>8} {'G-Dpsi':>8}")
    for I, K, n in LEVELS:
        m = build_mesh(st, I, K)
        red = hamiltonian_reduce(st, rep, m)
        sp = BumpData((1.5, 1.0), 0.4, (1, 1j), profile="bump").values(st, m)
        go = GreenOperators(red, EvolutionConfig(dt=1 / n))

        def f(t):
            return time_bump(t, 0.2, 0.6) * sp

        def psi(t):
            return time_bump(t, 0.3, 0.7) * sp

        def dpsi(t):
            return time_bump_derivative(t, 0.3, 0.7) * sp

        row = [go.right_inverse_residual(f, (0.2, 0.6), s) for s in (1, -1)]
        row += [go.left_inverse_residual(psi, dpsi, (0.3, 0.7), s) for s in (1, -1)]
        rows.append(row)
        print(f"{I:4d} {K:4d} {n:5d} " + " ".join(f"{v:8.4f}" for v in row))
    r = np.array(rows)
    for o in np.log2(r[:-1] / r[1:]):
        print("order          " + " ".join(f"{v:8.2f}" for v in o))


if __name__ == "__main__":
    main()
