"""Energy ledger: running energy balances for velocity, stress and total.

Each row holds instantaneous energies and time integrals from 0 to ``t`` of
every dissipation and work term.  Sign conventions: work terms enter the
right-hand side with the sign they carry, dissipation terms enter the left.

``residual_v``  = kinetic + viscous - kinetic0 - (f0 + f1 + ftilde + lifting_adv + coupling_v)
``residual_s``  = elastic + diffusion + plastic - elastic0 - (coupling_s + lifting_dw)
``residual_total`` = residual_v + residual_s

A balance holds as an inequality when its residual is <= tol * (1 + E0).
For the exact (``epsilon = 0``) potential the plastic term is ``int P(S)``,
otherwise ``int dP_eps(S):S``.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, fields

import numpy as np

INTEGRAL_KEYS = (
    "viscous_dissipation",
    "stress_diffusion",
    "plastic_dissipation",
    "plastic_potential",
    "work_f0",
    "work_f1",
    "work_ftilde",
    "work_lifting_adv",
    "work_lifting_dw",
    "coupling_v",
    "coupling_s",
)


@dataclass
class EnergyLedgerRow:
    t: float
    kinetic: float
    elastic: float
    kinetic0: float
    elastic0: float
    viscous_dissipation: float = 0.0
    stress_diffusion: float = 0.0
    plastic_dissipation: float = 0.0
    plastic_potential: float = 0.0
    work_f0: float = 0.0
    work_f1: float = 0.0
    work_ftilde: float = 0.0
    work_lifting_adv: float = 0.0
    work_lifting_dw: float = 0.0
    coupling_v: float = 0.0
    coupling_s: float = 0.0
    generalized: bool = False

    @property
    def plastic_term(self) -> float:
        return self.plastic_potential if self.generalized else self.plastic_dissipation

    @property
    def residual_v(self) -> float:
        rhs = self.kinetic0 + self.work_f0 + self.work_f1 + self.work_ftilde + self.work_lifting_adv + self.coupling_v
        return self.kinetic + self.viscous_dissipation - rhs

    @property
    def residual_s(self) -> float:
        rhs = self.elastic0 + self.coupling_s + self.work_lifting_dw
        return self.elastic + self.stress_diffusion + self.plastic_term - rhs

    @property
    def residual_total(self) -> float:
        return self.residual_v + self.residual_s

    @property
    def e0(self) -> float:
        return self.kinetic0 + self.elastic0


CSV_COLUMNS = [f.name for f in fields(EnergyLedgerRow)] + ["residual_v", "residual_s", "residual_total"]


@dataclass
class EnergyLedger:
    rows: list = field(default_factory=list)
    generalized: bool = False
    _last_rates: dict | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, i) -> EnergyLedgerRow:
        return self.rows[i]

    @property
    def e0(self) -> float:
        return self.rows[0].e0 if self.rows else 0.0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                vals = []
                for c in CSV_COLUMNS:
                    v = getattr(r, c)
                    vals.append(str(int(v)) if isinstance(v, bool) else f"{v:.17g}")
                w.writerow(vals)

    @classmethod
    def from_csv(cls, path) -> "EnergyLedger":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != CSV_COLUMNS:
                raise ValueError("ledger CSV has unexpected columns")
            rows = []
            for rec in reader:
                kw = {f.name: float(rec[f.name]) for f in fields(EnergyLedgerRow) if f.name != "generalized"}
                kw["generalized"] = bool(int(rec["generalized"]))
                rows.append(EnergyLedgerRow(**kw))
        gen = rows[0].generalized if rows else False
        return cls(rows=rows, generalized=gen)

    def with_energies(self, kinetic, elastic) -> "EnergyLedger":
        """Copy with instantaneous energies replaced (for re-checking stored snapshots)."""
        rows = []
        for r, k, e in zip(self.rows, kinetic, elastic):
            d = asdict(r)
            d["kinetic"], d["elastic"] = float(k), float(e)
            rows.append(EnergyLedgerRow(**d))
        return EnergyLedger(rows=rows, generalized=self.generalized)

    def as_generalized(self) -> "EnergyLedger":
        """Copy whose stress balance uses ``int P(S)`` in place of ``int dP(S):S``.

        Since ``dP(S):S >= P(S)``, the generalized residual is never larger.
        """
        rows = [EnergyLedgerRow(**{**asdict(r), "generalized": True}) for r in self.rows]
        return EnergyLedger(rows=rows, generalized=True)


def ledger_append(
    ledger: EnergyLedger, t: float, kinetic: float, elastic: float,
    increments: dict | None = None, rates: dict | None = None,
) -> EnergyLedgerRow:
    """Append a row.

    Either ``increments`` (exact per-interval integrals from the solver) or
    ``rates`` (instantaneous integrands, integrated by the trapezoid rule
    against the previous row's rates) must be given; the first row needs
    neither.
    """
    if not ledger.rows:
        row = EnergyLedgerRow(t, kinetic, elastic, kinetic, elastic, generalized=ledger.generalized)
        ledger.rows.append(row)
        ledger._last_rates = rates
        return row
    prev = ledger.rows[-1]
    inc = dict.fromkeys(INTEGRAL_KEYS, 0.0)
    if increments is not None:
        for k, v in increments.items():
            if k not in inc:
                raise KeyError(f"unknown ledger term {k}")
            inc[k] = v
    elif rates is not None:
        last = ledger._last_rates
        if last is None:
            raise ValueError("trapezoid accumulation needs rates at the previous row")
        dt = t - prev.t
        for k in INTEGRAL_KEYS:
            inc[k] = 0.5 * dt * (rates.get(k, 0.0) + last.get(k, 0.0))
        ledger._last_rates = rates
    kw = {k: getattr(prev, k) + inc[k] for k in INTEGRAL_KEYS}
    row = EnergyLedgerRow(t, kinetic, elastic, prev.kinetic0, prev.elastic0, generalized=ledger.generalized, **kw)
    ledger.rows.append(row)
    return row


def ledger_from_rates(times, samples: list, generalized: bool = False) -> EnergyLedger:
    led = EnergyLedger(generalized=generalized)
    for t, r in zip(times, samples):
        ledger_append(led, float(t), r["kinetic"], r["elastic"], rates=r)
    return led


@dataclass
class EdiReport:
    passed: bool
    tol: float
    e0: float
    worst_v: float
    worst_s: float
    worst_total: float
    worst_time: float

    @property
    def worst(self) -> float:
        return max(self.worst_v, self.worst_s, self.worst_total)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"energy balances {status}: residuals v={self.worst_v:.3e} S={self.worst_s:.3e} "
            f"total={self.worst_total:.3e} (bound {self.tol * (1 + self.e0):.3e}, worst at t={self.worst_time:.4g})"
        )


def check_edi(ledger: EnergyLedger, tol: float = 1e-6, equality: bool = False) -> EdiReport:
    """Check the three balances on every row.

    With ``equality=True`` the absolute residuals are bounded (for smooth
    Galerkin runs, where the balances are identities).
    """
    e0 = ledger.e0
    f = np.abs if equality else (lambda x: x)
    # the first row is zero by construction; report the worst later row
    first = 1 if len(ledger.rows) > 1 else 0
    rv = f(ledger.column("residual_v"))[first:]
    rs = f(ledger.column("residual_s"))[first:]
    rt = f(ledger.column("residual_total"))[first:]
    bound = tol * (1 + e0)
    worst_each = np.maximum(np.maximum(rv, rs), rt)
    i = int(np.argmax(worst_each)) if len(worst_each) else 0
    passed = bool(np.all(worst_each <= bound))
    t = float(ledger.rows[i + first].t) if ledger.rows else 0.0
    return EdiReport(passed, tol, e0, float(rv.max(initial=-np.inf)), float(rs.max(initial=-np.inf)),
                     float(rt.max(initial=-np.inf)), t)
