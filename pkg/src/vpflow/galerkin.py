"""Spectral Galerkin reference solver on the periodic box [0, 2pi)^3.

Velocity is expanded in real divergence-free Fourier modes and the stress in
real deviatoric Fourier modes, both orthonormal in L^2.  The ODE right-hand
side is evaluated by quadrature on a uniform periodic grid with ``3N + 1``
points per axis.  That rule integrates every product of three trigonometric
polynomials of degree ``<= N`` exactly, so the convective, Jaumann and
coupling forms are evaluated without aliasing error and the discrete energy
balance carries only the time-integration error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import potentials as pot
from . import tensor as T

TWO_PI = 2.0 * np.pi
VOLUME = TWO_PI**3
BLOWUP = 1e12


POWER_KEYS = (
    "viscous_dissipation", "stress_diffusion", "plastic_dissipation", "plastic_potential", "work_f0", "work_f1",
    "coupling_v", "coupling_s", "convection", "rotation", "advection_s",
)
_LEDGER_KEYS = set(POWER_KEYS) - {"convection", "rotation", "advection_s"}


def _kahan(total, inc, comp):
    y = inc - comp
    t = total + y
    return t, (t - total) - y


class BlowUp(RuntimeError):
    def __init__(self, t: float):
        super().__init__(f"coefficients exceeded {BLOWUP:g} at t = {t:.6g}")
        self.t = t


def half_space_wavevectors(n: int, planar: bool = False) -> np.ndarray:
    """Nonzero integer vectors with ``|k|_inf <= n`` and first nonzero entry > 0."""
    rng = np.arange(-n, n + 1)
    kz = np.array([0]) if planar else rng
    grid = np.stack(np.meshgrid(rng, rng, kz, indexing="ij"), axis=-1).reshape(-1, 3)
    keep = []
    for k in grid:
        nz = np.flatnonzero(k)
        if nz.size and k[nz[0]] > 0:
            keep.append(k)
    keep = np.array(keep, dtype=int).reshape(-1, 3)
    order = np.lexsort((keep[:, 2], keep[:, 1], keep[:, 0], np.abs(keep).max(axis=1)))
    return keep[order]


def polarizations(k: np.ndarray) -> np.ndarray:
    """Two orthonormal vectors perpendicular to each row of ``k``; shape (K, 2, 3)."""
    kh = k / np.linalg.norm(k, axis=1, keepdims=True)
    ref = np.where(np.abs(kh[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = np.cross(kh, ref)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(kh, e1)
    return np.stack([e1, e2], axis=1)


@dataclass
class GalerkinBasis:
    """Mode tables and quadrature matrices for a given maximal wavenumber.

    Row ``r`` of the harmonic tables runs over ``cos`` modes of every
    representative wavevector followed by the matching ``sin`` modes.
    Velocity coefficients have shape ``(2K, 2)`` (harmonic, polarization);
    stress coefficients are the five mean modes plus ``(2K, 5)``.
    """

    max_wavenumber: int
    planar: bool = False
    kvecs: np.ndarray = field(init=False)
    pol: np.ndarray = field(init=False)
    points: np.ndarray = field(init=False)
    weight: float = field(init=False)
    phi: np.ndarray = field(init=False)
    dphi: np.ndarray = field(init=False)
    k2: np.ndarray = field(init=False)

    def __post_init__(self):
        n = int(self.max_wavenumber)
        if n < 1:
            raise ValueError("max_wavenumber must be >= 1")
        k = half_space_wavevectors(n, self.planar)
        self.kvecs = k
        pol = polarizations(k)
        self.pol = np.concatenate([pol, pol], axis=0)
        m = 3 * n + 1
        x = TWO_PI * np.arange(m) / m
        z = np.array([0.0]) if self.planar else x
        pts = np.stack(np.meshgrid(x, x, z, indexing="ij"), axis=-1).reshape(-1, 3)
        self.points = pts
        self.weight = VOLUME / len(pts)
        c = np.sqrt(2.0 / VOLUME)
        arg = pts @ k.T
        cs, sn = np.cos(arg), np.sin(arg)
        self.phi = c * np.concatenate([cs, sn], axis=1)
        kk = np.concatenate([k, k], axis=0).astype(float)
        self.dphi = np.stack(
            [c * np.concatenate([-sn * k[:, d], cs * k[:, d]], axis=1) for d in range(3)]
        )
        self.k2 = (kk**2).sum(axis=1)
        self.kk = kk

    @property
    def n_harm(self) -> int:
        return self.phi.shape[1]

    @property
    def n_velocity(self) -> int:
        return 2 * self.n_harm

    @property
    def n_tensor(self) -> int:
        return 5 + 5 * self.n_harm

    @property
    def mean_norm(self) -> float:
        return 1.0 / np.sqrt(VOLUME)

    # layout helpers --------------------------------------------------------

    def split(self, y: np.ndarray):
        nv = self.n_velocity
        alpha = y[:nv].reshape(self.n_harm, 2)
        beta0 = y[nv : nv + 5]
        beta = y[nv + 5 :].reshape(self.n_harm, 5)
        return alpha, beta0, beta

    def join(self, alpha, beta0, beta) -> np.ndarray:
        return np.concatenate([np.ravel(alpha), np.ravel(beta0), np.ravel(beta)])

    # evaluation at quadrature points --------------------------------------

    def cartesian(self, alpha: np.ndarray) -> np.ndarray:
        return np.einsum("rp,rpj->rj", alpha, self.pol)

    def velocity(self, alpha):
        return self.phi @ self.cartesian(alpha)

    def velocity_gradient(self, alpha):
        """``G[q, j, m] = d_m v_j`` at the quadrature points."""
        a = self.cartesian(alpha)
        return np.stack([self.dphi[m] @ a for m in range(3)], axis=-1)

    def stress(self, beta0, beta):
        return self.mean_norm * beta0[None, :] + self.phi @ beta

    def stress_gradient(self, beta):
        """``dS[q, a, m] = d_m S_a``."""
        return np.stack([self.dphi[m] @ beta for m in range(3)], axis=-1)

    # projections ----------------------------------------------------------

    def project_vector(self, f: np.ndarray) -> np.ndarray:
        """``<f, phi_l>`` for pointwise vector values ``f`` of shape (Q, 3)."""
        p = self.phi.T @ (self.weight * f)
        return np.einsum("rj,rpj->rp", p, self.pol)

    def project_grad(self, flux: np.ndarray) -> np.ndarray:
        """``<F, grad phi_l> = int F_jm d_m phi_lj`` for ``F`` of shape (Q, 3, 3)."""
        p = sum(self.dphi[m].T @ (self.weight * flux[:, :, m]) for m in range(3))
        return np.einsum("rj,rpj->rp", p, self.pol)

    def project_tensor(self, x: np.ndarray):
        """``<X, psi_l>`` for deviatoric coordinates ``X`` of shape (Q, 5)."""
        b0 = self.mean_norm * self.weight * x.sum(axis=0)
        return b0, self.phi.T @ (self.weight * x)

    # evaluation anywhere --------------------------------------------------

    def _harmonics(self, pts: np.ndarray):
        c = np.sqrt(2.0 / VOLUME)
        arg = pts @ self.kvecs.T
        return c * np.concatenate([np.cos(arg), np.sin(arg)], axis=1)

    def velocity_at(self, alpha, pts):
        return self._harmonics(np.asarray(pts, float)) @ self.cartesian(alpha)

    def stress_at(self, beta0, beta, pts):
        return self.mean_norm * beta0[None, :] + self._harmonics(np.asarray(pts, float)) @ beta


def build_bases(max_wavenumber: int, planar: bool = False) -> GalerkinBasis:
    return GalerkinBasis(max_wavenumber, planar)


ForcingFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass
class OracleConfig:
    max_wavenumber: int = 2
    mu: float = 0.1
    gamma: float = 0.1
    eta: float = 1.0
    potential: pot.PotentialSpec = field(default_factory=pot.Quadratic)
    epsilon: float = 1e-2
    h: float = 1e-3
    t_end: float = 1.0
    output_every: int = 1
    planar: bool = False
    f0: Optional[ForcingFn] = None
    f1: Optional[ForcingFn] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("the Galerkin oracle needs epsilon > 0 (smooth envelope)")
        if not (self.h > 0 and self.t_end >= 0):
            raise ValueError("h must be > 0 and t_end >= 0")
        if self.mu <= 0 or self.gamma <= 0:
            raise ValueError("mu and gamma must be > 0")


@dataclass
class OracleTrajectory:
    basis: GalerkinBasis
    config: OracleConfig
    times: np.ndarray
    states: np.ndarray
    # running time integrals of the power terms, one row per stored state
    integrals: Optional[np.ndarray] = None

    def split(self, i):
        return self.basis.split(self.states[i])


class GalerkinOracle:
    def __init__(self, config: OracleConfig):
        self.config = config
        self.basis = build_bases(config.max_wavenumber, config.planar)

    # initial data ---------------------------------------------------------

    def project_initial(self, velocity: Callable, stress: Callable) -> np.ndarray:
        """L^2 projection of pointwise callables ``x -> (Q, 3)`` and ``x -> (Q, 5)``."""
        b = self.basis
        alpha = b.project_vector(velocity(b.points))
        b0, bk = b.project_tensor(stress(b.points))
        return b.join(alpha, b0, bk)

    # right-hand side ------------------------------------------------------

    def terms(self, t: float, y: np.ndarray) -> dict:
        """Individual RHS contributions, each in coefficient layout."""
        cfg, b = self.config, self.basis
        alpha, beta0, beta = b.split(y)
        v = b.velocity(alpha)
        g = b.velocity_gradient(alpha)
        s = b.stress(beta0, beta)
        ds = b.stress_gradient(beta)
        sm = T.to_matrix(s)
        out = {}
        out["convection"] = b.project_grad(v[:, :, None] * v[:, None, :])
        out["coupling_v"] = b.project_grad(-cfg.eta * sm)
        out["viscous"] = -cfg.mu * b.k2[:, None] * alpha
        zero_a = np.zeros_like(alpha)
        out["f0"] = b.project_vector(cfg.f0(t, b.points)) if cfg.f0 else zero_a
        out["f1"] = b.project_grad(-cfg.f1(t, b.points)) if cfg.f1 else zero_a
        adv = -np.einsum("qm,qam->qa", v, ds)
        rot = -T.jaumann_commutator(s, T.spin(g), check=False)
        plast = -pot.moreau_grad(cfg.potential, s, cfg.epsilon)
        src = cfg.eta * T.dev_sym_project(g)
        out["advection_s"] = b.project_tensor(adv)
        out["rotation"] = b.project_tensor(rot)
        out["plastic"] = b.project_tensor(plast)
        out["coupling_s"] = b.project_tensor(src)
        out["diffusion"] = (np.zeros(5), -cfg.gamma * b.k2[:, None] * beta)
        return out

    def _assemble(self, tm: dict) -> np.ndarray:
        da = tm["convection"] + tm["coupling_v"] + tm["viscous"] + tm["f0"] + tm["f1"]
        keys = ("advection_s", "rotation", "plastic", "coupling_s", "diffusion")
        db0 = sum(tm[k][0] for k in keys)
        db = sum(tm[k][1] for k in keys)
        return self.basis.join(da, db0, db)

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        return self._assemble(self.terms(t, y))

    def _rhs_and_power(self, t: float, y: np.ndarray):
        tm = self.terms(t, y)
        r = self._power(t, y, tm)
        return self._assemble(tm), np.array([r[k] for k in POWER_KEYS])

    # time integration -----------------------------------------------------

    def integrate(self, y0: np.ndarray) -> OracleTrajectory:
        cfg = self.config
        nsteps = int(round(cfg.t_end / cfg.h))
        if abs(nsteps * cfg.h - cfg.t_end) > 1e-9 * max(1.0, cfg.t_end):
            raise ValueError("t_end must be an integer multiple of h")
        y = np.array(y0, dtype=float)
        # the power terms ride along as extra RK4 components, so the ledger
        # integrals carry the same O(h^4) error as the state
        q = np.zeros(len(POWER_KEYS))
        times, states, integrals = [0.0], [y.copy()], [q.copy()]
        cy, cq = np.zeros_like(y), np.zeros_like(q)
        h = cfg.h
        for n in range(nsteps):
            t = n * h
            k1, p1 = self._rhs_and_power(t, y)
            k2, p2 = self._rhs_and_power(t + h / 2, y + h / 2 * k1)
            k3, p3 = self._rhs_and_power(t + h / 2, y + h / 2 * k2)
            k4, p4 = self._rhs_and_power(t + h, y + h * k3)
            # compensated sums keep roundoff well below the O(h^4) error
            y, cy = _kahan(y, h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), cy)
            q, cq = _kahan(q, h / 6 * (p1 + 2 * p2 + 2 * p3 + p4), cq)
            if not np.all(np.isfinite(y)) or np.abs(y).max() > BLOWUP:
                raise BlowUp(t + h)
            if (n + 1) % cfg.output_every == 0 or n + 1 == nsteps:
                times.append((n + 1) * h)
                states.append(y.copy())
                integrals.append(q.copy())
        return OracleTrajectory(self.basis, cfg, np.array(times), np.array(states), np.array(integrals))

    # energy bookkeeping ---------------------------------------------------

    def rates(self, t: float, y: np.ndarray) -> dict:
        """Instantaneous energies and power terms of the two partial balances."""
        return self._power(t, y, self.terms(t, y))

    def _power(self, t: float, y: np.ndarray, tm: dict) -> dict:
        cfg, b = self.config, self.basis
        alpha, beta0, beta = b.split(y)
        s = b.stress(beta0, beta)

        def pair_s(term):
            return float(term[0] @ beta0 + np.sum(term[1] * beta))

        return {
            "kinetic": 0.5 * float(np.sum(alpha**2)),
            "elastic": 0.5 * float(beta0 @ beta0 + np.sum(beta**2)),
            "viscous_dissipation": cfg.mu * float(np.sum(b.k2[:, None] * alpha**2)),
            "stress_diffusion": cfg.gamma * float(np.sum(b.k2[:, None] * beta**2)),
            "plastic_dissipation": -pair_s(tm["plastic"]),
            "plastic_potential": b.weight * float(pot.moreau_value(cfg.potential, s, cfg.epsilon).sum()),
            "work_f0": float(np.sum(tm["f0"] * alpha)),
            "work_f1": float(np.sum(tm["f1"] * alpha)),
            "coupling_v": float(np.sum(tm["coupling_v"] * alpha)),
            "coupling_s": pair_s(tm["coupling_s"]),
            "convection": float(np.sum(tm["convection"] * alpha)),
            "rotation": pair_s(tm["rotation"]),
            "advection_s": pair_s(tm["advection_s"]),
        }


def integrate(config: OracleConfig, y0: np.ndarray) -> OracleTrajectory:
    return GalerkinOracle(config).integrate(y0)


def energy_report(traj: OracleTrajectory, quadrature: str = "rk4"):
    """Energy ledger of an oracle trajectory.

    ``quadrature="rk4"`` uses the integrals accumulated during integration;
    ``"trapezoid"`` integrates the sampled rates between stored states.
    """
    from .ledger import EnergyLedger, ledger_append, ledger_from_rates

    oracle = GalerkinOracle(traj.config)
    samples = [oracle.rates(t, y) for t, y in zip(traj.times, traj.states)]
    if quadrature == "trapezoid" or traj.integrals is None:
        return ledger_from_rates(traj.times, samples)
    if quadrature != "rk4":
        raise ValueError(f"unknown quadrature {quadrature!r}")
    led = EnergyLedger()
    for i, (t, r) in enumerate(zip(traj.times, samples)):
        inc = None
        if i:
            inc = {k: float(traj.integrals[i, j] - traj.integrals[i - 1, j])
                   for j, k in enumerate(POWER_KEYS) if k in _LEDGER_KEYS}
        ledger_append(led, float(t), r["kinetic"], r["elastic"], increments=inc)
    return led


@dataclass
class AprioriBound:
    observed: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.observed <= self.bound


def apriori_bound(traj: OracleTrajectory) -> AprioriBound:
    """Uniform bound on ``sup(|v|^2 + |S|^2) + int(|v|_{1,2}^2 + |S|_{1,2}^2)``.

    Without lifting the energy balance gives, with ``E0 = |v0|^2 + |S0|^2``,
    ``A = |f0|_{L1 L2}`` and ``B = |f1|^2_{L2 L2} / mu``,
    ``X = sup(|v|^2 + |S|^2) <= 2 (E0 + B + 2 A^2)`` and
    ``mu int |grad v|^2 + 2 gamma int |grad S|^2 <= E0 + B + 2 A sqrt(X)``.
    """
    cfg, b = traj.config, traj.basis
    t = traj.times
    oracle = GalerkinOracle(cfg)
    rates = [oracle.rates(ti, y) for ti, y in zip(t, traj.states)]
    l2 = np.array([2 * (r["kinetic"] + r["elastic"]) for r in rates])
    grad_v = np.array([r["viscous_dissipation"] / cfg.mu for r in rates])
    grad_s = np.array([r["stress_diffusion"] / cfg.gamma for r in rates])

    def trap(f):
        return float(np.sum(0.5 * np.diff(t) * (f[1:] + f[:-1]))) if len(t) > 1 else 0.0

    observed = float(l2.max()) + trap(l2) + trap(grad_v) + trap(grad_s)
    f0n = np.array([np.sqrt(b.weight * np.sum(cfg.f0(ti, b.points) ** 2)) if cfg.f0 else 0.0 for ti in t])
    f1n = np.array([b.weight * np.sum(cfg.f1(ti, b.points) ** 2) if cfg.f1 else 0.0 for ti in t])
    # time integrals of the data bounded by length times sampled sup
    T = float(t[-1] - t[0])
    A = T * float(f0n.max(initial=0.0))
    B = T * float(f1n.max(initial=0.0)) / cfg.mu
    E0 = float(l2[0])
    X = 2.0 * (E0 + B + 2 * A * A)
    grads = (E0 + B + 2 * A * np.sqrt(X)) * (1.0 / cfg.mu + 1.0 / (2 * cfg.gamma))
    return AprioriBound(observed, float(X + T * X + grads))
