"""Relative L2 difference between the planar Galerkin oracle and the MAC solver under refinement."""

import argparse
import time

import numpy as np

from vpflow import potentials as pot
from vpflow.galerkin import GalerkinOracle, OracleConfig
from vpflow.mac import Grid
from vpflow.solver import MacSolver, Physics, run


def v0(x):
    return np.stack([0.5 * np.sin(x[:, 0]) * np.cos(x[:, 1]) + 0.2 * np.cos(x[:, 1]),
                     -0.5 * np.cos(x[:, 0]) * np.sin(x[:, 1]) + 0.2 * np.sin(x[:, 0]),
                     0.3 * np.cos(x[:, 0] + x[:, 1])], 1)


def s0(x):
    return np.stack([0.3 * np.cos(x[:, 0]), 0.2 * np.sin(x[:, 1]), 0.2 * np.cos(x[:, 0] - x[:, 1]),
                     0.1 * np.sin(x[:, 0]), 0.1 * np.cos(x[:, 1])], 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--t-end", type=float, default=0.5)
    ap.add_argument("--dt32", type=float, default=0.0125, help="time step on the 32^2 grid; scaled like h^2")
    args = ap.parse_args()

    mu = gamma = 0.05
    spec = pot.Quadratic(1.0)
    cfg = OracleConfig(max_wavenumber=10, mu=mu, gamma=gamma, eta=1.0, potential=spec, epsilon=1e-2,
                       h=2.5e-3, t_end=args.t_end, output_every=int(round(args.t_end / 2.5e-3)), planar=True)
    o = GalerkinOracle(cfg)
    alpha, beta0, beta = o.integrate(o.project_initial(v0, s0)).split(-1)
    b = o.basis

    errs = []
    for n in args.sizes:
        g = Grid((n, n, 1), (2 * np.pi,) * 3)
        sol = MacSolver(g, Physics(mu, gamma, 1.0, spec, 1e-2), dt=args.dt32 * (32 / n) ** 2)
        t0 = time.perf_counter()
        st = run(sol, sol.initial_state(v0, s0), args.t_end, args.t_end).states[-1]
        pos = g.unknown_positions()
        vo = np.concatenate([b.velocity_at(alpha, pos[a])[:, a] for a in range(3)])
        so = b.stress_at(beta0, beta, g.cell_centers().reshape(-1, 3))
        err = np.sqrt((g.ip(st.V - vo, st.V - vo) + g.ip(st.S - so, st.S - so)) / (g.ip(vo, vo) + g.ip(so, so)))
        order = "" if not errs else f"{np.log2(errs[-1] / err):.2f}"
        errs.append(err)
        print(f"{n:4d}^2  rel L2 {err:.3e}  order {order:>5}  ({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
