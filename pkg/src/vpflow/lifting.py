"""Solenoidal lifting of tangential wall velocity (Hopf-type extension).

For a wall with outward normal ``n`` and distance ``d`` the lifting is
``w = curl(phi(d) n x g)`` where ``phi(d) = d * zeta(d / delta)`` and ``zeta``
is a smooth cutoff equal to 1 at the wall and 0 beyond ``delta``.  On the
wall ``w = g``.  The vector potential is sampled on cell edges and the curl
taken with the staggered differences, so ``div w`` vanishes to rounding and
the normal wall faces of ``w`` are exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mac import Grid
from .profiles import Profile, ProfileError

WALL_NAMES = {(0, 0): "x_min", (0, 1): "x_max", (1, 0): "y_min", (1, 1): "y_max", (2, 0): "z_min", (2, 1): "z_max"}
WALL_KEYS = {v: k for k, v in WALL_NAMES.items()}


class UnsupportedGeometry(ValueError):
    pass


def cutoff(s: np.ndarray) -> np.ndarray:
    """C^2 step from 1 at s <= 0 to 0 at s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


@dataclass
class BoundaryData:
    """Tangential velocity prescribed on walls, keyed by ``(axis, side)``."""

    walls: dict = field(default_factory=dict)

    def validate(self, grid: Grid):
        for (b, s), prof in self.walls.items():
            name = WALL_NAMES[(b, s)]
            if grid.periodic[b]:
                raise UnsupportedGeometry(f"boundary.{name}: axis {b} is periodic, no wall to drive")
            if prof.kind in ("taylor_green",):
                raise ProfileError(f"boundary.{name}", "profile kind not allowed for wall data")
            if abs(prof.direction[b]) > 0:
                raise ProfileError(f"boundary.{name}_direction", "wall data must be tangential")
            # compatibility with neighbouring walls: g has to vanish on the edges
            for c in range(3):
                if c == b or grid.periodic[c]:
                    continue
                for edge in (0.0, grid.L[c]):
                    x = np.array([[0.5 * grid.L[0], 0.5 * grid.L[1], 0.5 * grid.L[2]]])
                    x[0, c] = edge
                    x[0, b] = 0.0 if s == 0 else grid.L[b]
                    val = self.evaluate_wall(grid, (b, s), 0.0, x)
                    if np.abs(val).max() > 1e-12:
                        raise ProfileError(
                            f"boundary.{name}", "tangential data must vanish where the wall meets another wall"
                        )

    def evaluate_wall(self, grid: Grid, wall, t: float, x: np.ndarray) -> np.ndarray:
        b, _ = wall
        prof = self.walls[wall]
        per = tuple(grid.periodic[c] or c == b for c in range(3))
        return prof.vector(t, x, grid.L, per)

    def gfun(self, grid: Grid):
        """Callable ``(t, points) -> (P, 3)`` with the data of the wall each point lies on."""

        def g(t, x):
            x = np.asarray(x, dtype=float)
            out = np.zeros((len(x), 3))
            for (b, s), _ in self.walls.items():
                target = 0.0 if s == 0 else grid.L[b]
                on = np.abs(x[:, b] - target) <= 1e-12 * grid.L[b]
                if on.any():
                    out[on] += self.evaluate_wall(grid, (b, s), t, x[on])
            return out

        return g

    def is_homogeneous(self) -> bool:
        return all(p.amplitude == 0 for p in self.walls.values())


def _edge_positions(grid: Grid, a: int) -> np.ndarray:
    axes = []
    for b in range(3):
        if b == a:
            axes.append((np.arange(grid.n[b]) + 0.5) * grid.h[b])
        else:
            m = grid.n[b] + (0 if grid.periodic[b] else 1)
            axes.append(np.arange(m) * grid.h[b])
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _fdiff(arr: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return np.roll(arr, -1, axis=axis) - arr
    return np.diff(arr, axis=axis)


class HopfLifting:
    """Discretely solenoidal extension ``w(t)`` of the wall data into the box."""

    def __init__(self, grid: Grid, boundary: BoundaryData, delta: float):
        if not delta > 0:
            raise ValueError("lifting layer width must be > 0")
        boundary.validate(grid)
        self.grid = grid
        self.boundary = boundary
        self.delta = float(delta)
        self._gfun = boundary.gfun(grid)
        # spatial part of w for every wall; envelopes applied per time
        self._parts = []
        for wall, prof in boundary.walls.items():
            steady = Profile(**{**prof.__dict__, "time": "steady"})
            self._parts.append((prof, self._curl_for_wall(wall, steady)))

    @property
    def active(self) -> bool:
        return bool(self._parts)

    def _curl_for_wall(self, wall, prof: Profile) -> np.ndarray:
        grid = self.grid
        b, s = wall
        normal = np.zeros(3)
        normal[b] = -1.0 if s == 0 else 1.0
        per = tuple(grid.periodic[c] or c == b for c in range(3))
        A = []
        for a in range(3):
            pos = _edge_positions(grid, a)
            flat = pos.reshape(-1, 3)
            d = flat[:, b] if s == 0 else grid.L[b] - flat[:, b]
            phi = d * cutoff(d / self.delta)
            proj = flat.copy()
            proj[:, b] = 0.0 if s == 0 else grid.L[b]
            g = prof.vector(0.0, proj, grid.L, per)
            nxg = np.cross(normal[None, :], g)
            A.append((phi * nxg[:, a]).reshape(pos.shape[:-1]))
        h, P = grid.h, grid.periodic
        u = _fdiff(A[2], 1, P[1]) / h[1] - _fdiff(A[1], 2, P[2]) / h[2]
        v = _fdiff(A[0], 2, P[2]) / h[2] - _fdiff(A[2], 0, P[0]) / h[0]
        w = _fdiff(A[1], 0, P[0]) / h[0] - _fdiff(A[0], 1, P[1]) / h[1]
        for a, f in enumerate((u, v, w)):
            if not P[a]:
                sl0 = [slice(None)] * 3; sl0[a] = 0
                sl1 = [slice(None)] * 3; sl1[a] = -1
                f[tuple(sl0)] = 0.0
                f[tuple(sl1)] = 0.0
        return grid.from_faces([u, v, w])

    def w(self, t: float) -> np.ndarray:
        out = np.zeros(self.grid.nu)
        for prof, part in self._parts:
            out = out + prof.envelope(t) * part
        return out

    def g(self, t: float, x: np.ndarray) -> np.ndarray:
        return self._gfun(t, x)

    def bvec(self, t: float) -> np.ndarray:
        if not self.active:
            return np.zeros(self.grid.nb)
        return self.grid.boundary_vector(self._gfun, t)


def hopf_extension(grid: Grid, boundary: BoundaryData, delta: float) -> HopfLifting:
    return HopfLifting(grid, boundary, delta)


def random_test_fields(grid: Grid, n: int, rng: np.random.Generator, smooth: float = 0.1) -> list:
    """Smooth divergence-free fields with homogeneous wall values."""
    from .solver import Projector

    proj = Projector(grid)
    ell2 = (smooth * min(grid.L)) ** 2
    op = spla.splu((sp.eye(grid.nu) - ell2 * grid.lap_v0).tocsc())
    out = []
    for _ in range(n):
        v = rng.normal(size=grid.nu)
        for _k in range(3):
            v = op.solve(v)
        out.append(proj.project(v)[0])
    return out


def smallness_ratio(lift: HopfLifting, fields: list, mu: float, t: float = 0.0) -> float:
    """max over test fields of ``|int w (v . grad) v| / (mu/2 ||grad v||^2)``."""
    g = lift.grid
    w = lift.w(t)
    worst = 0.0
    for v in fields:
        num = abs(g.ip(w, g.velocity_advection(v) @ v))
        den = 0.5 * mu * g.ip(-(g.lap_v0 @ v), v)
        worst = max(worst, num / den)
    return worst


def smallness_threshold(
    grid: Grid, boundary: BoundaryData, mu: float, n_samples: int = 100, seed: int = 0,
    t: float = 0.0, delta_max: float | None = None,
) -> float:
    """Largest layer width (halving search) meeting the smallness bound on random fields."""
    rng = np.random.default_rng(seed)
    fields = random_test_fields(grid, n_samples, rng)
    delta = delta_max if delta_max is not None else 0.5 * min(
        grid.L[b] for b in range(3) if not grid.periodic[b]
    )
    floor = 2.0 * float(np.max(grid.h))
    while delta >= floor:
        lift = HopfLifting(grid, boundary, delta)
        if smallness_ratio(lift, fields, mu, t) <= 1.0:
            return delta
        delta *= 0.5
    raise UnsupportedGeometry("no resolvable layer width satisfies the smallness bound; refine the grid")
