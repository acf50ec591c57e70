"""Galerkin energy-equality residuals under step halving, RK4-integrated vs trapezoid ledger."""

import argparse
import time

import numpy as np

from vpflow import potentials as pot
from vpflow.galerkin import GalerkinOracle, OracleConfig, energy_report


def v0(x):
    return np.stack([np.sin(x[:, 1]) + 0.5 * np.cos(2 * x[:, 2]),
                     np.sin(x[:, 2]) + 0.3 * np.cos(x[:, 0] - x[:, 2]),
                     np.sin(x[:, 0]) + 0.3 * np.cos(x[:, 0] - x[:, 2])], 1)


def s0(x):
    return np.stack([0.5 * np.cos(x[:, 0] + x[:, 1]), 0.4 * np.sin(2 * x[:, 2]), 0.3 * np.cos(x[:, 1]),
                     0.2 * np.sin(x[:, 0] - x[:, 1]), 0.1 + 0 * x[:, 0]], 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=float, nargs="+", default=[2e-3, 1e-3, 5e-4])
    ap.add_argument("--max-wavenumber", type=int, default=2)
    ap.add_argument("--t-end", type=float, default=1.0)
    args = ap.parse_args()

    prev = None
    print(f"{'h':>8} {'quadrature':>10} {'|res_v|':>10} {'|res_S|':>10} {'ratio_v':>8} {'ratio_S':>8} {'sec':>6}")
    for h in args.steps:
        cfg = OracleConfig(max_wavenumber=args.max_wavenumber, mu=0.05, gamma=0.05, eta=1.0,
                           potential=pot.Quadratic(1.0), epsilon=1e-2, h=h, t_end=args.t_end)
        o = GalerkinOracle(cfg)
        t0 = time.perf_counter()
        tr = o.integrate(o.project_initial(v0, s0))
        sec = time.perf_counter() - t0
        cur = {}
        for q in ("rk4", "trapezoid"):
            led = energy_report(tr, quadrature=q)
            cur[q] = (np.abs(led.column("residual_v")).max(), np.abs(led.column("residual_s")).max())
            rv, rs = cur[q]
            ratios = ("", "") if prev is None else (f"{prev[q][0] / rv:.2f}", f"{prev[q][1] / rs:.2f}")
            print(f"{h:8.1e} {q:>10} {rv:10.2e} {rs:10.2e} {ratios[0]:>8} {ratios[1]:>8} {sec:6.1f}")
        prev = cur


if __name__ == "__main__":
    main()
