"""Evolutionary variational inequality for the stress, evaluated on stored runs.

For a test field ``St`` and every output time ``T'`` the sum

    int dSt:(St - S) + gamma grad S:grad(St - S) + (P(St) - P(S))
      + V.grad S:St + (S W - W S):St - eta D(V):(St - S)

over ``(0, T')`` must be ``>= -1/2 |St(0) - S0|^2``.  Terms involving only
``S`` come from the solver's energy ledger (so ``St = 0`` reproduces the
partial stress balance to rounding); the ones involving ``St`` use the
trapezoid rule over the snapshots.  The stronger variant with
``1/2 |St(T') - S(T')|^2`` added on the right is reported as well.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import potentials as pot
from . import tensor as T
from .solver import GridTrajectory, jaumann_blocks


class IncompatibleSampling(ValueError):
    pass


@dataclass
class TestField:
    __test__ = False  # not a pytest class

    name: str
    times: np.ndarray
    values: list
    rates: list


@dataclass
class VarInCase:
    name: str
    times: np.ndarray
    total: np.ndarray
    lhs_min: np.ndarray
    strong_rhs: np.ndarray
    bound: float

    @property
    def residual(self) -> np.ndarray:
        return self.lhs_min - self.total

    @property
    def strong_residual(self) -> np.ndarray:
        return self.strong_rhs - self.total

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residual <= self.bound))

    @property
    def worst(self) -> float:
        """Largest residual after the initial row (which is zero by construction)."""
        r = self.residual[1:] if len(self.residual) > 1 else self.residual
        return float(r.max())

    @property
    def worst_strong(self) -> float:
        r = self.strong_residual[1:] if len(self.residual) > 1 else self.strong_residual
        return float(r.max())


@dataclass
class VarInReport:
    cases: list = field(default_factory=list)
    tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cases)

    def text(self) -> str:
        lines = [f"variational inequality check (tol {self.tol:g}): {'PASS' if self.passed else 'FAIL'}"]
        for c in self.cases:
            lines.append(
                f"  {c.name:<16s} {'PASS' if c.passed else 'FAIL'}  worst residual {c.worst:+.3e}"
                f"  strong-form residual {c.worst_strong:+.3e}  bound {c.bound:.3e}"
            )
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["field", "t", "total", "lhs_min", "residual", "strong_residual"])
            for c in self.cases:
                for i, t in enumerate(c.times):
                    w.writerow([c.name] + [f"{x:.17g}" for x in (t, c.total[i], c.lhs_min[i], c.residual[i], c.strong_residual[i])])


def _cumtrap(t, f):
    return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (f[1:] + f[:-1]))])


def check_varin(traj: GridTrajectory, test_fields: list, tol: float = 1e-6) -> VarInReport:
    g = traj.grid
    ph = traj.physics
    led = traj.ledger
    times = traj.times
    if len(led.rows) != len(times) or not np.allclose(led.times, times, rtol=0, atol=1e-12):
        raise IncompatibleSampling("ledger rows and snapshots are not aligned")
    lift = traj.lifting
    # per-snapshot operators that depend only on the run
    ops = []
    for st in traj.states:
        b = lift.bvec(st.t) if lift is not None and lift.active else None
        grad = g.gradient_cells(st.V, b)
        C = g.cell_advection(st.V)
        adv = C @ st.S
        rot = np.einsum("cab,cb->ca", jaumann_blocks(T.spin(grad)), st.S)
        dv = T.dev_sym_project(grad)
        lapS = g.lap_s @ st.S
        ops.append((adv, rot, dv, lapS))
    r2 = led.column("stress_diffusion")
    r3 = led.column("plastic_potential")
    r6 = led.column("coupling_s") + led.column("work_lifting_dw")
    e0 = led.e0
    report = VarInReport(tol=tol)
    eta_src = 0.0 if ph.decoupled else ph.eta
    S0 = traj.states[0].S
    for tf in test_fields:
        if len(tf.times) != len(times) or not np.allclose(tf.times, times, rtol=0, atol=1e-12):
            raise IncompatibleSampling(f"test field {tf.name}: sample times differ from snapshot times")
        n = len(times)
        f1, f2, f3, f4, f5, f6 = (np.zeros(n) for _ in range(6))
        for i, st in enumerate(traj.states):
            St, dSt = tf.values[i], tf.rates[i]
            adv, rot, dv, lapS = ops[i]
            f1[i] = g.ip(dSt, St - st.S)
            f2[i] = ph.gamma * g.ip(-lapS, St)
            f3[i] = g.vol * float(np.sum(pot.moreau_value(ph.potential, St, ph.epsilon)))
            f4[i] = g.ip(adv, St)
            f5[i] = g.ip(rot, St)
            f6[i] = -eta_src * g.ip(dv, St)
        total = (
            _cumtrap(times, f1) + _cumtrap(times, f2) - r2 + _cumtrap(times, f3) - r3
            + _cumtrap(times, f4) + _cumtrap(times, f5) + _cumtrap(times, f6) + r6
        )
        d0 = tf.values[0] - S0
        lhs = np.full(n, -0.5 * g.ip(d0, d0))
        strong = np.array([0.5 * g.ip(tf.values[i] - traj.states[i].S, tf.values[i] - traj.states[i].S)
                           for i in range(n)]) + lhs
        report.cases.append(VarInCase(tf.name, times.copy(), total, lhs, strong, tol * (1 + e0)))
    return report


# --------------------------------------------------------------------------
# test field families


def zero_field(traj: GridTrajectory) -> TestField:
    z = np.zeros_like(traj.states[0].S)
    n = len(traj.states)
    return TestField("zero", traj.times, [z] * n, [z] * n)


def mollified_field(traj: GridTrajectory, width: float) -> TestField:
    """Causal moving average ``(1/k) int_{t-k}^t S``, with ``S = S0`` before 0.

    ``S`` is taken piecewise linear between snapshots, so the average and its
    time derivative ``(S(t) - S(t-k)) / k`` are exact for that interpolant.
    """
    t = traj.times
    S = np.array([s.S for s in traj.states])
    if not width > 0:
        raise ValueError("mollifier width must be > 0")

    def interp(tau):
        if tau <= t[0]:
            return S[0]
        j = min(int(np.searchsorted(t, tau, side="right")) - 1, len(t) - 2)
        th = (tau - t[j]) / (t[j + 1] - t[j])
        return (1 - th) * S[j] + th * S[j + 1]

    def integral(a, b):
        # exact integral of the piecewise-linear interpolant over [a, b]
        pts = [a] + [x for x in t if a < x < b] + [b]
        acc = np.zeros_like(S[0])
        for lo, hi in zip(pts[:-1], pts[1:]):
            acc = acc + 0.5 * (hi - lo) * (interp(lo) + interp(hi))
        return acc

    vals, rates = [], []
    for ti in t:
        lo = ti - width
        head = max(0.0, -lo) * S[0] if lo < t[0] else 0.0
        vals.append((integral(max(lo, t[0]), ti) + head) / width)
        rates.append((S[np.searchsorted(t, ti)] - interp(lo)) / width)
    return TestField(f"mollified({width:g})", t, vals, rates)


def random_fields(traj: GridTrajectory, n: int, rng: np.random.Generator, kmax: int = 2,
                  bound: float | None = None) -> list:
    """Smooth random trigonometric stress fields with a slow time modulation.

    ``bound`` caps ``|St|`` pointwise (use it to stay inside a yield ball).
    """
    g = traj.grid
    x = g.cell_centers().reshape(-1, 3)
    t = traj.times
    out = []
    for m in range(n):
        field_x = np.zeros((g.ncell, 5))
        for _ in range(4):
            k = rng.integers(-kmax, kmax + 1, size=3)
            if g.is_planar:
                k[2] = 0
            phase = rng.uniform(0, 2 * np.pi)
            arg = (2 * np.pi * x / np.array(g.L)) @ k + phase
            field_x += np.cos(arg)[:, None] * rng.normal(size=5)[None, :]
        if bound is not None:
            field_x *= 0.9 * bound / max(float(T.norm(field_x).max()), 1e-300) / 1.5
        om = rng.uniform(0.5, 3.0)
        amp = 1.0 + 0.5 * np.sin(om * t)
        damp = 0.5 * om * np.cos(om * t)
        out.append(TestField(f"random[{m}]", t, [a * field_x for a in amp], [d * field_x for d in damp]))
    return out


def self_field(traj: GridTrajectory) -> TestField:
    """``St = S`` at the snapshots; rates are one-sided snapshot differences."""
    t = traj.times
    S = [s.S for s in traj.states]
    rates = [np.zeros_like(S[0])] + [(S[i] - S[i - 1]) / (t[i] - t[i - 1]) for i in range(1, len(S))]
    return TestField("self", t, S, rates)


def constant_field(traj: GridTrajectory, value) -> TestField:
    c = np.broadcast_to(np.asarray(value, dtype=float), traj.states[0].S.shape).copy()
    z = np.zeros_like(c)
    n = len(traj.states)
    return TestField("constant", traj.times, [c] * n, [z] * n)


def fourier_field(traj: GridTrajectory, k, component: int = 0, amplitude: float = 1.0) -> TestField:
    g = traj.grid
    x = g.cell_centers().reshape(-1, 3)
    f = np.zeros((g.ncell, 5))
    f[:, component] = amplitude * np.cos((2 * np.pi * x / np.array(g.L)) @ np.asarray(k, float))
    z = np.zeros_like(f)
    n = len(traj.states)
    return TestField(f"fourier{tuple(int(q) for q in k)}", traj.times, [f] * n, [z] * n)
