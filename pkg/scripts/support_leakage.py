"""Finite propagation speed: mass outside the speed-1 cone before boundary contact.

    python3 scripts/support_leakage.py [--inner MIT] [--radius 1.0] [--center 2.2]
"""

import argparse
import time

import numpy as np

from apsdirac.data import BumpData
from apsdirac.diagnostics import support_mass
from apsdirac.dirac import build_mesh
from apsdirac.evolution import EvolutionConfig, solve_cauchy
from apsdirac.geometry import annulus
from apsdirac.spin import build_rep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--inner", default="APS", choices=("APS", "MIT"))
    p.add_argument("--radius", type=float, default=0.8)
    p.add_argument("--center", type=float, default=2.5)
    p.add_argument("--f0", type=float, default=0.5)
    p.add_argument("--levels", default="64,64,200;127,128,400")
    a = p.parse_args()
    st = annulus(1, 4, "static", {"f0": a.f0}, boundary={"inner": a.inner})
    rep = build_rep(2)
    prev = None
    print(f"{'I':>5} {'K':>5} {'steps':>6} {'contact':>8} {'leak(pre)':>10} {'leak(all)':>10} {'drop':>6} {'time':>6}")
    for lev in a.levels.split(";"):
        I, K, n = (int(v) for v in lev.split(","))
        m = build_mesh(st, I, K)
        bd = BumpData((a.center, np.pi), a.radius, (1, 0.5), profile="bump")
        t0 = time.perf_counter()
        r = solve_cauchy(st, rep, m, bd.values(st, m), None, EvolutionConfig(dt=1 / n, save_every=max(1, n // 20)))
        sr = support_mass(r, bd.center, bd.radius, improved=(a.inner == "MIT"))
        pre = sr.max_leakage(True)
        drop = "" if prev is None else f"{prev / pre:.1f}"
        print(f"{I:5d} {K:5d} {n:6d} {sr.contact_time:8.3f} {pre:10.3g} {sr.max_leakage():10.3g} {drop:>6} "
              f"{time.perf_counter() - t0:5.1f}s")
        prev = pre


if __name__ == "__main__":
    main()
