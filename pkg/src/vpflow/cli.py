"""``vpflow`` command line: run, oracle, sweep-eps, check, prox-table.

Exit codes: 0 all enabled checks passed, 2 invalid config, 3 run diverged,
4 a check failed.  ``VPFLOW_THREADS`` caps the BLAS/OpenMP thread count.
"""

from __future__ import annotations

import os

_threads = os.environ.get("VPFLOW_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import csv  # noqa: E402
import sys  # noqa: E402
from dataclasses import replace  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import io as vio  # noqa: E402
from . import potentials as pot  # noqa: E402
from .config import ParseError, SimConfig, ValidationError, load_config, serialize_config  # noqa: E402
from .galerkin import BlowUp, GalerkinOracle, apriori_bound, energy_report  # noqa: E402
from .ledger import check_edi  # noqa: E402
from .solver import GridState, GridTrajectory, SolverDiverged, l2_time_distance, run  # noqa: E402
from .varin import check_varin, mollified_field, random_fields, zero_field  # noqa: E402

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CHECKS = 0, 2, 3, 4


class _Out:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *msg):
        if not self.quiet:
            print(*msg)


# --------------------------------------------------------------------------
# shared pieces


def yield_radius(spec) -> float | None:
    if isinstance(spec, pot.YieldBall):
        return spec.sigma_yield
    if isinstance(spec, pot.Radial):
        return spec.cap
    return None


def run_checks(cfg: SimConfig, traj: GridTrajectory, tol: float, seed: int) -> list:
    """Enabled checks as ``(name, passed, message)`` triples."""
    out = []
    if cfg.checks.edi:
        rep = check_edi(traj.ledger, tol)
        out.append(("energy", rep.passed, rep.summary()))
    sigma = yield_radius(traj.physics.potential)
    if cfg.checks.yield_bound and sigma is not None and traj.physics.epsilon == 0:
        worst = max(float(np.sqrt((s.S**2).sum(axis=1)).max(initial=0.0)) for s in traj.states)
        ok = worst <= sigma + 1e-12
        out.append(("yield", ok, f"yield bound {'PASS' if ok else 'FAIL'}: max|S| = {worst:.15g}, sigma = {sigma:g}"))
    if cfg.checks.varin and len(traj.states) > 1:
        rng = np.random.default_rng(seed)
        fields = [zero_field(traj), mollified_field(traj, cfg.checks.mollifier_width)]
        fields += random_fields(traj, cfg.checks.varin_random, rng, bound=sigma)
        rep = check_varin(traj, fields, tol)
        out.append(("varin", rep.passed, rep.text()))
    return out


def initial_state(cfg: SimConfig, solver) -> GridState:
    if cfg.initial_snapshot is not None:
        grid, st = vio.read_snapshot(cfg.initial_snapshot)
        if grid != solver.grid:
            raise ValidationError("initial.snapshot", "snapshot grid differs from the configured grid")
        return st
    v, s = cfg.initial_fields()
    return solver.initial_state(v, s)


def _resolved(cfg: SimConfig, solver) -> SimConfig:
    """Config with the lifting width fixed to the value actually used."""
    return replace(cfg, lifting=replace(cfg.lifting, delta=solver.lift.delta, auto=False))


def _finish(checks: list, out: _Out, path: Path | None = None) -> int:
    lines = [msg for _, _, msg in checks]
    if path is not None:
        path.write_text("\n".join(lines) + "\n")
    for line in lines:
        out(line)
    failed = [name for name, ok, _ in checks if not ok]
    if failed:
        out(f"checks failed: {', '.join(failed)}")
        return EXIT_CHECKS
    return EXIT_OK


# --------------------------------------------------------------------------
# subcommands


def cmd_run(cfg: SimConfig, args, out: _Out) -> int:
    dest = Path(args.out)
    solver = cfg.build_solver()
    st0 = initial_state(cfg, solver)
    t_end = cfg.time.smoke_t_end if args.smoke else cfg.time.t_end
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "config.txt").write_text(serialize_config(_resolved(cfg, solver)))
    every = cfg.output.snapshot_every if cfg.output.snapshots else 10**12
    try:
        traj = run(solver, st0, t_end, cfg.time.output_interval)
    except SolverDiverged as exc:
        if exc.partial is not None:
            vio.write_run(dest, solver.grid, exc.partial.states, exc.partial.ledger, every)
        out(f"run diverged at t={exc.t:.6g}: {exc}")
        return EXIT_DIVERGED
    vio.write_run(dest, solver.grid, traj.states, traj.ledger, every)
    out(f"wrote {len(traj.states)} outputs to {dest}")
    return _finish(run_checks(cfg, traj, args.tol, args.seed), out, dest / "checks.txt")


def cmd_oracle(cfg: SimConfig, args, out: _Out) -> int:
    dest = Path(args.out)
    ocfg = cfg.build_oracle()
    if args.smoke:
        n = max(1, int(round(min(cfg.time.smoke_t_end, ocfg.t_end) / ocfg.h)))
        ocfg = replace(ocfg, t_end=n * ocfg.h, output_every=1)
    oracle = GalerkinOracle(ocfg)
    v, s = cfg.initial_fields(box=(2 * np.pi,) * 3, periodic=(True, True, True))
    zero_v = lambda x: np.zeros((len(x), 3))  # noqa: E731
    zero_s = lambda x: np.zeros((len(x), 5))  # noqa: E731
    y0 = oracle.project_initial(v or zero_v, s or zero_s)
    try:
        traj = oracle.integrate(y0)
    except BlowUp as exc:
        out(f"oracle blew up at t={exc.t:.6g}")
        return EXIT_DIVERGED
    dest.mkdir(parents=True, exist_ok=True)
    led = energy_report(traj)
    led.to_csv(dest / "oracle_ledger.csv")
    with open(dest / "oracle_states.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"y{i}" for i in range(traj.states.shape[1])])
        for t, y in zip(traj.times, traj.states):
            w.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in y])
    rep = check_edi(led, args.tol, equality=True)
    ab = apriori_bound(traj)
    checks = [
        ("energy", rep.passed, rep.summary().replace("energy balances", "energy equalities")),
        ("apriori", ab.passed, f"a-priori bound {'PASS' if ab.passed else 'FAIL'}: {ab.observed:.6g} <= {ab.bound:.6g}"),
    ]
    return _finish(checks, out, dest / "checks.txt")


def cmd_sweep(cfg: SimConfig, args, out: _Out) -> int:
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    t_end = cfg.time.smoke_t_end if args.smoke else cfg.time.t_end
    eps_list = sorted(cfg.sweep.epsilons, reverse=True) + [0.0]
    trajs = {}
    checks = []
    for eps in eps_list:
        solver = cfg.build_solver(epsilon=eps)
        try:
            trajs[eps] = run(solver, initial_state(cfg, solver), t_end, cfg.time.output_interval)
        except SolverDiverged as exc:
            out(f"run at epsilon={eps:g} diverged at t={exc.t:.6g}: {exc}")
            return EXIT_DIVERGED
        if cfg.checks.edi:
            rep = check_edi(trajs[eps].ledger, args.tol)
            checks.append((f"energy(eps={eps:g})", rep.passed, f"eps={eps:g}: {rep.summary()}"))
    with open(dest / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon_a", "epsilon_b", "l2_time_distance"])
        for i, ea in enumerate(eps_list):
            for eb in eps_list[i + 1 :]:
                w.writerow([f"{ea:.17g}", f"{eb:.17g}", f"{l2_time_distance(trajs[ea], trajs[eb]):.17g}"])
    dist = [l2_time_distance(trajs[e], trajs[0.0]) for e in eps_list[:-1]]
    mono = all(d1 < d0 for d0, d1 in zip(dist, dist[1:]))
    table = ", ".join(f"{e:g}: {d:.4e}" for e, d in zip(eps_list, dist))
    checks.append(("monotone", mono, f"distance to eps=0 {'decreasing' if mono else 'NOT decreasing'}: {table}"))
    return _finish(checks, out, dest / "checks.txt")


def cmd_check(cfg: SimConfig | None, args, out: _Out) -> int:
    src = Path(args.out)
    if cfg is None:
        cfg = load_config(src / "config.txt")
    grid, states, ledger = vio.read_run(src)
    if grid != cfg.build_grid():
        raise ValidationError("grid.n", "stored snapshots use a different grid")
    solver = cfg.build_solver()
    times = ledger.times
    keep = []
    for st in states:
        j = int(np.argmin(np.abs(times - st.t)))
        if abs(times[j] - st.t) > 1e-9 * max(1.0, abs(st.t)):
            raise vio.SnapshotError(f"snapshot at t={st.t} has no ledger row")
        keep.append(j)
    sub = type(ledger)(rows=[ledger.rows[j] for j in keep], generalized=ledger.generalized)
    sub = sub.with_energies([solver.kinetic(s) for s in states], [solver.elastic(s) for s in states])
    traj = GridTrajectory(grid, states, sub, solver.phys, solver.lift)
    return _finish(run_checks(cfg, traj, args.tol, args.seed), out)


def cmd_prox_table(cfg: SimConfig, args, out: _Out) -> int:
    eps = cfg.potential.epsilon
    if not eps > 0:
        raise ValidationError("potential.epsilon", "prox-table needs epsilon > 0 (used as the prox step)")
    spec = cfg.build_potential()
    radii = np.asarray(cfg.prox_table.radii, dtype=float)
    direction = np.zeros(5)
    direction[0] = 1.0
    x = radii[:, None] * direction[None, :]
    px = pot.prox(spec, x, eps)
    mv = pot.moreau_value(spec, x, eps)
    mg = pot.moreau_grad(spec, x, eps)
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    rows = [(r, float(np.linalg.norm(p)), float(m), float(np.linalg.norm(gr))) for r, p, m, gr in zip(radii, px, mv, mg)]
    with open(dest / "prox_table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "prox_radius", "moreau_value", "moreau_grad_norm"])
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])
    out(f"{'radius':>12s} {'prox':>12s} {'P_eps':>12s} {'|dP_eps|':>12s}")
    for row in rows:
        out(" ".join(f"{v:12.6g}" for v in row))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "oracle": cmd_oracle, "sweep-eps": cmd_sweep, "check": cmd_check,
            "prox-table": cmd_prox_table}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--out", default="out", help="output directory (input directory for check)")
    common.add_argument("--seed", type=int, default=None, help="seed for random test fields")
    common.add_argument("--tol", type=float, default=None, help="relative tolerance of the checks")
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--smoke", action="store_true", help="stop at time.smoke_t_end")
    p = argparse.ArgumentParser(prog="vpflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = _Out(args.quiet)
    try:
        if args.config is None:
            if args.command != "check":
                raise ValidationError("--config", "a config file is required")
            cfg = None
        else:
            cfg = load_config(args.config)
        base = cfg if cfg is not None else load_config(Path(args.out) / "config.txt")
        if args.tol is None:
            args.tol = base.checks.tol
        elif not args.tol > 0:
            raise ValidationError("--tol", "must be > 0")
        if args.seed is None:
            args.seed = base.checks.seed
        elif args.seed < 0:
            raise ValidationError("--seed", "must be >= 0")
        return COMMANDS[args.command](cfg if cfg is not None or args.command == "check" else base, args, out)
    except (ParseError, ValidationError) as exc:
        print(f"config invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, vio.SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverDiverged, BlowUp, pot.NoConvergence) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
