"""Fractional-step solver on the MAC grid.

One step of size ``dt`` applies, in order:

1. stress transport and Jaumann rotation (implicit midpoint, skew centred
   flux plus a fourth-order upwind-type dissipation),
2. stress diffusion (backward Euler, Neumann walls),
3. elastic coupling ``S <- eta D(V)``, ``V <- eta Div S`` (implicit midpoint
   of the skew pair),
4. plastic relaxation (proximal map of ``dt P_eps``, exact for ``eps = 0``),
5. velocity advection (implicit midpoint, skew divergence-form flux),
6. viscosity and forcing (backward Euler),
7. pressure projection.

The velocity is advanced as ``v = V - w`` with ``w`` the solenoidal lifting
of the wall data, so ``v`` has homogeneous wall values.  Each substep is
either energy-conserving or dissipative in the discrete L^2 product, and the
solver returns the exact discrete work and dissipation of every substep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import potentials as pot
from . import tensor as T
from .ledger import EnergyLedger, ledger_append
from .lifting import BoundaryData, HopfLifting
from .mac import Grid

LINEAR_RTOL = 1e-12
DIVERGED_RESIDUAL = 1e-10
ENERGY_BLOWUP = 1e12


class SolverDiverged(RuntimeError):
    def __init__(self, msg: str, t: float = float("nan")):
        super().__init__(msg)
        self.t = t
        self.partial = None


class CflViolation(SolverDiverged):
    pass


@dataclass
class Physics:
    mu: float = 0.1
    gamma: float = 0.1
    eta: float = 1.0
    potential: pot.PotentialSpec = field(default_factory=pot.Quadratic)
    epsilon: float = 0.0
    decoupled: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be > 0")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if not self.eta >= 0:
            raise ValueError("eta must be >= 0")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")


@dataclass
class Forcing:
    """Body force ``f0(t, x) -> (P, 3)`` and stress forcing ``f1(t, x) -> (P, 3, 3)``."""

    f0: Optional[Callable] = None
    f1: Optional[Callable] = None


@dataclass
class GridState:
    t: float
    V: np.ndarray
    S: np.ndarray
    p: np.ndarray


def _check(info, res, what, t):
    if info != 0 or res > DIVERGED_RESIDUAL:
        raise SolverDiverged(f"{what}: linear solve residual {res:.2e} (info {info})", t)


def cg_solve(A, b, x0=None, M=None, rtol=LINEAR_RTOL, what="cg", t=float("nan"), scale=0.0):
    """CG to ``|r| <= rtol * max(|b|, scale)``."""
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return np.zeros_like(b)
    ref = max(nb, scale)
    x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=rtol * scale, maxiter=20 * len(b), M=M)
    res = float(np.linalg.norm(b - A @ x)) / ref
    _check(info, res, what, t)
    return x


def gmres_solve(A, b, x0=None, rtol=LINEAR_RTOL, what="gmres", t=float("nan")):
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return np.zeros_like(b)
    x, info = spla.gmres(A, b, x0=x0, rtol=rtol, atol=0.0, restart=60, maxiter=50)
    res = float(np.linalg.norm(b - A @ x)) / nb
    if info != 0 or res > DIVERGED_RESIDUAL:
        x = spla.spsolve(A.tocsc(), b)
        res = float(np.linalg.norm(b - A @ x)) / nb
        info = 0
    _check(info, res, what, t)
    return x


class Projector:
    """Orthogonal projection onto discretely divergence-free face fields."""

    def __init__(self, grid: Grid, rtol: float = LINEAR_RTOL):
        self.grid = grid
        self.A = (grid.div @ grid.div.T).tocsr()
        d = self.A.diagonal()
        self.M = sp.diags(1.0 / np.where(d > 0, d, 1.0))
        self.rtol = rtol
        self._phi = None

    def project(self, v: np.ndarray, t: float = float("nan")):
        g = self.grid
        rhs = g.div @ v
        rhs = rhs - rhs.mean()
        # the residual is measured against the size of div(v) a generic v of
        # this norm would have, so a field that is already solenoidal to
        # solver accuracy is returned unchanged
        scale = float(np.linalg.norm(v)) * float(np.max(1.0 / g.h))
        if np.linalg.norm(rhs) <= self.rtol * scale:
            return v.copy(), np.zeros(g.ncell)
        phi = cg_solve(self.A, rhs, x0=self._phi, M=self.M, rtol=self.rtol, what="pressure", t=t, scale=scale)
        self._phi = phi
        out = v - g.div.T @ phi
        return out, -(phi - phi.mean())


def _jaumann_kernel() -> np.ndarray:
    E = T.FRAME
    unit = np.eye(9).reshape(9, 3, 3)
    k = np.einsum("aik,bij,cjk->cab", E, E, unit) - np.einsum("aik,cij,bjk->cab", E, unit, E)
    return k.reshape(9, 25)


_JK = _jaumann_kernel()


def jaumann_blocks(w: np.ndarray) -> np.ndarray:
    """``J[c] @ s = coords(S W - W S)`` for spin tensors ``w`` of shape (nc, 3, 3)."""
    return (w.reshape(-1, 9) @ _JK).reshape(-1, 5, 5)


class MacSolver:
    def __init__(
        self,
        grid: Grid,
        physics: Physics,
        dt: float,
        forcing: Optional[Forcing] = None,
        boundary: Optional[BoundaryData] = None,
        lifting_delta: float = 0.1,
        cfl_max: float = 0.5,
        upwind_coef: float = 0.25,
    ):
        if not dt > 0:
            raise ValueError("dt must be > 0")
        self.grid = grid
        self.phys = physics
        self.dt = float(dt)
        self.forcing = forcing or Forcing()
        self.boundary = boundary or BoundaryData()
        self.lift = HopfLifting(grid, self.boundary, lifting_delta)
        self.cfl_max = cfl_max
        self.upwind_coef = upwind_coef
        self.proj = Projector(grid)
        nc, nu = grid.ncell, grid.nu
        self._stress_lu = spla.splu((sp.eye(nc) - self.dt * physics.gamma * grid.lap_s).tocsc())
        self._visc_lu = spla.splu((sp.eye(nu) - self.dt * physics.mu * grid.lap_v0).tocsc())
        c = 0.5 * self.dt * physics.eta
        self._couple = (sp.eye(nu) + c * c * (grid.gdev0.T @ grid.gdev0)).tocsr()
        dg = self._couple.diagonal()
        self._couple_M = sp.diags(1.0 / dg)
        self._cell_pts = grid.cell_centers().reshape(-1, 3)
        self._face_pts = grid.unknown_positions()

    # sampled data -----------------------------------------------------------

    def _f0(self, t):
        if self.forcing.f0 is None:
            return None
        pos = self._face_pts
        return np.concatenate([self.forcing.f0(t, pos[a])[:, a] for a in range(3)])

    def _divf1(self, t):
        if self.forcing.f1 is None:
            return None
        return self.grid.div_tensor_field(self.forcing.f1(t, self._cell_pts))

    # initial data -------------------------------------------------------------

    def initial_state(self, velocity: Callable, stress: Callable, t0: float = 0.0) -> GridState:
        """Project sampled ``velocity(x) -> (P, 3)`` and ``stress(x) -> (P, 5)``."""
        g = self.grid
        w0 = self.lift.w(t0)
        v = g.sample_velocity(velocity) - w0 if velocity is not None else np.zeros(g.nu)
        v, _ = self.proj.project(v, t0)
        S = g.sample_cells(stress) if stress is not None else np.zeros((g.ncell, 5))
        return GridState(t0, v + w0, np.array(S, dtype=float).reshape(g.ncell, 5), np.zeros(g.ncell))

    # step -------------------------------------------------------------------

    def cfl(self, V: np.ndarray) -> float:
        g = self.grid
        return max(
            float(np.abs(V[g.offsets[a] : g.offsets[a + 1]]).max(initial=0.0)) * self.dt / g.h[a]
            for a in range(3)
            if g.n[a] > 1
        )

    def step(self, st: GridState):
        g, ph, dt = self.grid, self.phys, self.dt
        vol = g.vol
        t0, t1 = st.t, st.t + dt
        nc = g.ncell
        inc = {}
        cfl = self.cfl(st.V)
        if cfl > self.cfl_max:
            raise CflViolation(f"CFL number {cfl:.3f} exceeds {self.cfl_max}", t0)

        w0, w1 = self.lift.w(t0), self.lift.w(t1)
        b0, b1 = self.lift.bvec(t0), self.lift.bvec(t1)
        V = st.V
        v = V - w0

        # 1. stress transport + rotation, implicit midpoint
        grad = g.gradient_cells(V, b0)
        J = jaumann_blocks(T.spin(grad))
        Ts = -g.cell_advection(V) + g.upwind_dissipation(V, self.upwind_coef)
        rows = (np.arange(nc)[:, None, None] * 5 + np.arange(5)[None, :, None]) * np.ones((1, 1, 5), int)
        cols = (np.arange(nc)[:, None, None] * 5 + np.arange(5)[None, None, :]) * np.ones((1, 5, 1), int)
        Jb = sp.csr_matrix((J.ravel(), (rows.ravel(), cols.ravel())), shape=(5 * nc, 5 * nc))
        Atr = sp.eye(5 * nc) - 0.5 * dt * (sp.kron(Ts, sp.eye(5)) - Jb)
        s0 = st.S.ravel()
        sm = gmres_solve(Atr.tocsr(), s0, x0=s0, what="stress transport", t=t0)
        S = (2 * sm - s0).reshape(nc, 5)

        # 2. stress diffusion
        S = self._stress_lu.solve(S)
        inc["stress_diffusion"] = dt * ph.gamma * vol * float(np.sum(-(g.lap_s @ S) * S))

        # 3. elastic coupling
        dw = (g.gdev0 @ w0 + (g.gdevb @ b0 if b0.size else 0.0)) if self.lift.active else np.zeros(5 * nc)
        s2 = S.ravel()
        if ph.eta > 0 and not ph.decoupled:
            c = 0.5 * dt * ph.eta
            rhs = v - c * (g.gdev0.T @ (s2 + c * dw))
            vm = cg_solve(self._couple, rhs, x0=v, M=self._couple_M, what="coupling", t=t0)
            smid = s2 + c * (g.gdev0 @ vm + dw)
            work = dt * ph.eta * g.ip(smid, g.gdev0 @ vm)
            inc["coupling_v"] = -work
            inc["coupling_s"] = work
            inc["work_lifting_dw"] = dt * ph.eta * g.ip(smid, dw)
            v = 2 * vm - v
            s2 = 2 * smid - s2
        elif ph.eta > 0:
            dv = -dt * ph.eta * (g.gdev0.T @ s2)
            inc["coupling_v"] = -dt * ph.eta * g.ip(s2, g.gdev0 @ (v + 0.5 * dv))
            v = v + dv
        S = s2.reshape(nc, 5)

        # 4. plastic relaxation
        Sp = pot.prox_moreau(ph.potential, S, dt, ph.epsilon)
        inc["plastic_dissipation"] = vol * float(np.sum((S - Sp) * Sp))
        inc["plastic_potential"] = dt * vol * float(np.sum(pot.moreau_value(ph.potential, Sp, ph.epsilon)))
        S = Sp

        # 5. velocity advection with the old (solenoidal) velocity
        C = g.velocity_advection(V)
        Aadv = (sp.eye(g.nu) + 0.5 * dt * C).tocsr()
        rhs = v - 0.5 * dt * (C @ w0) if self.lift.active else v
        vm = gmres_solve(Aadv, rhs, x0=v, what="velocity advection", t=t0)
        if self.lift.active:
            inc["work_lifting_adv"] = dt * g.ip(C @ vm, w0)
        v = 2 * vm - v

        # 6. viscosity, forcing and lifting source, backward Euler
        r = np.zeros(g.nu)
        if self.lift.active:
            lw = ph.mu * (g.lap_v0 @ w1 + (g.lap_vb @ b1 if b1.size else 0.0)) - (w1 - w0) / dt
            r = r + lw
        f0 = self._f0(t1)
        if f0 is not None:
            r = r + f0
        df1 = self._divf1(t1)
        if df1 is not None:
            r = r + df1
        v = self._visc_lu.solve(v + dt * r)
        inc["viscous_dissipation"] = dt * ph.mu * g.ip(-(g.lap_v0 @ v), v)
        if f0 is not None:
            inc["work_f0"] = dt * g.ip(f0, v)
        if df1 is not None:
            inc["work_f1"] = dt * g.ip(df1, v)
        if self.lift.active:
            inc["work_ftilde"] = dt * g.ip(lw, v)

        # 7. projection
        v, phi = self.proj.project(v, t1)
        Vn = v + w1
        p = phi / dt
        new = GridState(t1, Vn, S, p)
        e = self.kinetic(new) + self.elastic(new)
        if not np.isfinite(e) or e > ENERGY_BLOWUP:
            raise SolverDiverged("energy is not finite", t1)
        return new, inc

    # diagnostics ---------------------------------------------------------------

    def kinetic(self, st: GridState) -> float:
        """``1/2 |V - w|^2``: energy of the homogeneous part."""
        v = st.V - self.lift.w(st.t) if self.lift.active else st.V
        return 0.5 * self.grid.ip(v, v)

    def total_kinetic(self, st: GridState) -> float:
        return 0.5 * self.grid.ip(st.V, st.V)

    def elastic(self, st: GridState) -> float:
        return 0.5 * self.grid.ip(st.S, st.S)


@dataclass
class GridTrajectory:
    grid: Grid
    states: list
    ledger: EnergyLedger
    physics: Physics
    lifting: Optional[HopfLifting] = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


def run(
    solver: MacSolver,
    state0: GridState,
    t_end: float,
    output_interval: float,
    on_output: Optional[Callable] = None,
) -> GridTrajectory:
    """Advance to ``t_end``, storing states and ledger rows every ``output_interval``."""
    dt = solver.dt
    nsteps = int(round((t_end - state0.t) / dt))
    every = max(1, int(round(output_interval / dt)))
    led = EnergyLedger(generalized=solver.phys.epsilon == 0)
    traj = GridTrajectory(solver.grid, [state0], led, solver.phys, solver.lift)
    ledger_append(led, state0.t, solver.kinetic(state0), solver.elastic(state0))
    if on_output:
        on_output(state0, led.rows[-1])
    st = state0
    acc = {}
    try:
        for n in range(nsteps):
            st, inc = solver.step(st)
            for k, val in inc.items():
                acc[k] = acc.get(k, 0.0) + val
            if (n + 1) % every == 0 or n + 1 == nsteps:
                row = ledger_append(led, st.t, solver.kinetic(st), solver.elastic(st), increments=acc)
                acc = {}
                traj.states.append(st)
                if on_output:
                    on_output(st, row)
    except SolverDiverged as exc:
        exc.partial = traj
        raise
    return traj


def l2_time_distance(a: GridTrajectory, b: GridTrajectory) -> float:
    """``(int_0^T |V_a - V_b|^2 + |S_a - S_b|^2 dt)^(1/2)`` by the trapezoid rule over shared outputs."""
    if len(a.states) != len(b.states) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories are not sampled at the same times")
    g = a.grid
    f = np.array([g.ip(x.V - y.V, x.V - y.V) + g.ip(x.S - y.S, x.S - y.S) for x, y in zip(a.states, b.states)])
    return float(np.sqrt(np.sum(0.5 * np.diff(a.times) * (f[1:] + f[:-1]))))
