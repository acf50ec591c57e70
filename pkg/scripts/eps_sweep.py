"""Distance of smoothed lid-cavity runs to the eps = 0 run, with per-run energy balances."""

import argparse
from pathlib import Path

from vpflow.config import load_config
from vpflow.ledger import check_edi
from vpflow.solver import l2_time_distance, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(CONFIGS / "lid_cavity.cfg"))
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    args = ap.parse_args()

    cfg = load_config(args.config)
    v, s = cfg.initial_fields()

    def solve(eps):
        sol = cfg.build_solver(epsilon=eps)
        return run(sol, sol.initial_state(v, s), cfg.time.t_end, cfg.time.output_interval)

    ref = solve(0.0)
    print(f"eps=0      {check_edi(ref.ledger).summary()}")
    for eps in args.eps:
        tr = solve(eps)
        print(f"eps={eps:<6g} distance {l2_time_distance(tr, ref):.4e}  {check_edi(tr.ledger).summary()}")


if __name__ == "__main__":
    main()
