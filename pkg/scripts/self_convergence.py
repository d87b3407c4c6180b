"""Self-convergence of the physical-picture solve on the interval with a non-unit lapse.

    python3 scripts/self_convergence.py [--T 0.2] [--I0 32]
"""

import argparse

from apsdirac.data import BumpData, time_bump
from apsdirac.diagnostics import convergence_study
from apsdirac.dirac import build_mesh
from apsdirac.evolution import EvolutionConfig, solve_cauchy
from apsdirac.geometry import interval
from apsdirac.spin import build_rep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--T", type=float, default=0.2)
    p.add_argument("--I0", type=int, default=32)
    p.add_argument("--radius", type=float, default=0.45)
    p.add_argument("--profile", default="gaussian", choices=("gaussian", "bump"))
    a = p.parse_args()
    st = interval(1.0, "exp_warp", {"alpha": 0.1}, lapse="sin2_bump", lapse_params={"amplitude": 0.3},
                  boundary={"left": "MIT"})
    rep = build_rep(1)

    def run(level):
        I, n = level
        m = build_mesh(st, I)
        psi0 = BumpData((0.5,), a.radius, (1, 0.5j), profile=a.profile).values(st, m)
        sp = BumpData((0.5,), 0.7 * a.radius, (0, 1), profile=a.profile).values(st, m)

        def f(t):
            return time_bump(t, 0.0, a.T) * sp

        r = solve_cauchy(st, rep, m, psi0, f, EvolutionConfig(dt=a.T / n, save_every=n), t_end=a.T)
        return r.physical[-1], m, m.sbp_weights * st.sqrt_det_h(a.T, m.x)

    levels = [(a.I0 * 2**k + 1, a.I0 // 2 * 2**k) for k in range(4)]
    rep_ = convergence_study(run, levels)
    for lev, d in zip(levels, rep_.differences):
        print(f"I={lev[0]:4d} steps={lev[1]:4d}  |u_h - u_h/2| = {d:.4g}")
    print("orders", " ".join(f"{o:.3f}" for o in rep_.orders))


if __name__ == "__main__":
    main()
