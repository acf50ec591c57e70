"""Staggered (MAC) grid on a box with per-axis periodic or wall topology.

Velocity lives on cell faces, stress and pressure at cell centres.  Every
linear operator is assembled once as a ``scipy.sparse`` matrix so that
discrete adjoints are exact transposes.  All fields of one kind share the
same control volume ``hx*hy*hz``, so the discrete L^2 product is the plain
dot product times that volume.

Face arrays for component ``a`` have length ``n_a + 1`` along a wall axis
(both wall faces included, always zero) and ``n_a`` along a periodic axis.
The unknown vector stacks the non-wall faces of the three components.
Tangential wall data enter through a separate *boundary vector*: for every
face adjacent to a wall and tangential to it the ghost value is
``2 g - u``, giving a matrix acting on unknowns plus one acting on ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import tensor as T


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    n: tuple = (32, 32, 1)
    L: tuple = (2 * np.pi, 2 * np.pi, 2 * np.pi)
    periodic: tuple = (True, True, True)

    def __post_init__(self):
        n = tuple(int(x) for x in self.n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "L", tuple(float(x) for x in self.L))
        object.__setattr__(self, "periodic", tuple(bool(x) for x in self.periodic))
        if len(n) != 3 or len(self.L) != 3 or len(self.periodic) != 3:
            raise GridError("grid needs three axes")
        for a in range(3):
            if n[a] == 1 and a == 2 and self.periodic[2]:
                continue
            if n[a] < 4:
                raise GridError(f"axis {a}: need at least 4 cells (a single periodic z cell is allowed)")
        if any(x <= 0 for x in self.L):
            raise GridError("box lengths must be > 0")

    # geometry ---------------------------------------------------------------

    @property
    def h(self) -> np.ndarray:
        return np.array(self.L) / np.array(self.n)

    @property
    def vol(self) -> float:
        return float(np.prod(self.h))

    @property
    def ncell(self) -> int:
        return int(np.prod(self.n))

    @property
    def is_planar(self) -> bool:
        return self.n[2] == 1

    def face_shape(self, a: int) -> tuple:
        s = list(self.n)
        if not self.periodic[a]:
            s[a] += 1
        return tuple(s)

    def unknown_range(self, a: int) -> slice:
        return slice(1, self.n[a]) if not self.periodic[a] else slice(0, self.n[a])

    def unknown_shape(self, a: int) -> tuple:
        s = list(self.n)
        if not self.periodic[a]:
            s[a] -= 1
        return tuple(s)

    @cached_property
    def offsets(self) -> np.ndarray:
        sizes = [int(np.prod(self.unknown_shape(a))) for a in range(3)]
        return np.concatenate([[0], np.cumsum(sizes)])

    @property
    def nu(self) -> int:
        return int(self.offsets[-1])

    def cell_centers(self) -> np.ndarray:
        axes = [(np.arange(self.n[a]) + 0.5) * self.h[a] for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def face_positions(self, a: int) -> np.ndarray:
        axes = []
        for b in range(3):
            m = self.face_shape(a)[b]
            axes.append(np.arange(m) * self.h[b] if b == a else (np.arange(m) + 0.5) * self.h[b])
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def unknown_positions(self) -> list:
        out = []
        for a in range(3):
            sl = [slice(None)] * 3
            sl[a] = self.unknown_range(a)
            out.append(self.face_positions(a)[tuple(sl)].reshape(-1, 3))
        return out

    # unknown vector <-> face arrays -----------------------------------------

    @cached_property
    def uidx(self) -> list:
        """Face-array index -> unknown index (-1 on wall faces)."""
        out = []
        for a in range(3):
            arr = -np.ones(self.face_shape(a), dtype=np.int64)
            sl = [slice(None)] * 3
            sl[a] = self.unknown_range(a)
            arr[tuple(sl)] = self.offsets[a] + np.arange(int(np.prod(self.unknown_shape(a)))).reshape(
                self.unknown_shape(a)
            )
            out.append(arr)
        return out

    def to_faces(self, vec: np.ndarray) -> list:
        out = []
        for a in range(3):
            f = np.zeros(self.face_shape(a))
            sl = [slice(None)] * 3
            sl[a] = self.unknown_range(a)
            f[tuple(sl)] = vec[self.offsets[a] : self.offsets[a + 1]].reshape(self.unknown_shape(a))
            out.append(f)
        return out

    def from_faces(self, faces: list) -> np.ndarray:
        parts = []
        for a in range(3):
            sl = [slice(None)] * 3
            sl[a] = self.unknown_range(a)
            parts.append(np.asarray(faces[a])[tuple(sl)].ravel())
        return np.concatenate(parts)

    def sample_velocity(self, fun) -> np.ndarray:
        """Unknown vector of face-normal components of ``fun(points) -> (P, 3)``."""
        pos = self.unknown_positions()
        return np.concatenate([fun(pos[a])[:, a] for a in range(3)])

    def sample_cells(self, fun) -> np.ndarray:
        x = self.cell_centers().reshape(-1, 3)
        return np.asarray(fun(x))

    # boundary slots ---------------------------------------------------------

    @cached_property
    def walls(self) -> list:
        return [(b, s) for b in range(3) if not self.periodic[b] for s in (0, 1)]

    @cached_property
    def _bslot_info(self):
        out, count, pts = {}, 0, []
        for a in range(3):
            for b, s in self.walls:
                if b == a:
                    continue
                arr = -np.ones(self.face_shape(a), dtype=np.int64)
                sl = [slice(None)] * 3
                sl[b] = 0 if s == 0 else self.n[b] - 1
                plane = self.uidx[a][tuple(sl)]
                mask = plane >= 0
                vals = -np.ones(plane.shape, dtype=np.int64)
                vals[mask] = count + np.arange(int(mask.sum()))
                arr[tuple(sl)] = vals
                pos = self.face_positions(a)[tuple(sl)][mask].copy()
                pos[:, b] = 0.0 if s == 0 else self.L[b]
                pts.append((a, pos))
                count += int(mask.sum())
                out[(a, b, s)] = arr
        return out, pts, count

    @property
    def bslots(self) -> dict:
        """Map (a, b, s) -> face array of slot indices for tangential wall data."""
        return self._bslot_info[0]

    @property
    def nb(self) -> int:
        return self._bslot_info[2]

    def boundary_points(self) -> list:
        return self._bslot_info[1]

    def boundary_vector(self, gfun, t: float) -> np.ndarray:
        """Stack tangential wall data ``gfun(t, points) -> (P, 3)`` into slot order."""
        parts = [gfun(t, pos)[:, a] if len(pos) else np.zeros(0) for a, pos in self.boundary_points()]
        return np.concatenate(parts) if parts else np.zeros(0)

    # reference resolution ---------------------------------------------------

    def resolve(self, a: int, idx: tuple):
        """Resolve face references of component ``a`` (possibly out of range).

        Returns ``(uid, cu, bid, cb)``: value = cu * u[uid] + cb * g[bid], where a
        negative id means no contribution.
        """
        idx = [np.array(i, dtype=np.int64, copy=True) for i in np.broadcast_arrays(*idx)]
        shape = self.face_shape(a)
        cu = np.ones(idx[0].shape)
        cb = np.zeros(idx[0].shape)
        ghost_wall = -np.ones(idx[0].shape, dtype=np.int64)
        for b in range(3):
            if self.periodic[b]:
                idx[b] %= shape[b]
                continue
            lo, hi = idx[b] < 0, idx[b] >= shape[b]
            if b == a:
                if lo.any() or hi.any():
                    raise GridError("normal-direction reference outside the wall")
                continue
            idx[b] = np.where(lo, 0, np.where(hi, shape[b] - 1, idx[b]))
            g = lo | hi
            cu = np.where(g, -1.0, cu)
            cb = np.where(g, 2.0, cb)
            ghost_wall = np.where(lo, 2 * b, np.where(hi, 2 * b + 1, ghost_wall))
        uid = self.uidx[a][tuple(idx)]
        cu = np.where(uid >= 0, cu, 0.0)
        bid = -np.ones(idx[0].shape, dtype=np.int64)
        for b, s in self.walls:
            if b == a:
                continue
            sel = ghost_wall == 2 * b + s
            if sel.any():
                slots = self.bslots[(a, b, s)][tuple(i[sel] for i in idx)]
                bid[sel] = slots
        cb = np.where(bid >= 0, cb, 0.0)
        return uid, cu, bid, cb

    # assembly helpers ---------------------------------------------------------

    def _unknown_index_arrays(self, a):
        rng = [np.arange(m) for m in self.face_shape(a)]
        rng[a] = np.arange(self.face_shape(a)[a])[self.unknown_range(a)]
        grids = np.meshgrid(*rng, indexing="ij")
        return [g.ravel() for g in grids]

    def _cell_index_arrays(self):
        grids = np.meshgrid(*[np.arange(m) for m in self.n], indexing="ij")
        return [g.ravel() for g in grids]

    def _cell_flat(self, idx):
        return np.ravel_multi_index(tuple(idx), self.n)

    @staticmethod
    def _acc(rows_u, cols_u, vals_u, rows_b, cols_b, vals_b, row, coef, ref):
        uid, cu, bid, cb = ref
        m = uid >= 0
        rows_u.append(row[m]); cols_u.append(uid[m]); vals_u.append((coef * cu)[m])
        m = bid >= 0
        rows_b.append(row[m]); cols_b.append(bid[m]); vals_b.append((coef * cb)[m])

    def _finish(self, nrow, parts_u, parts_b):
        def mk(rows, cols, vals, ncol):
            if rows:
                r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
            else:
                r = c = np.zeros(0, dtype=np.int64); v = np.zeros(0)
            return sp.csr_matrix((v, (r, c)), shape=(nrow, ncol))

        return mk(*parts_u, self.nu), mk(*parts_b, self.nb)

    # operators --------------------------------------------------------------

    @cached_property
    def div(self) -> sp.csr_matrix:
        cidx = self._cell_index_arrays()
        row = self._cell_flat(cidx)
        ru, cu_, vu, rb, cb, vb = [], [], [], [], [], []
        for a in range(3):
            for off, sgn in ((1, 1.0), (0, -1.0)):
                idx = list(cidx)
                idx[a] = cidx[a] + off
                self._acc(ru, cu_, vu, rb, cb, vb, row, sgn / self.h[a], self.resolve(a, idx))
        return self._finish(self.ncell, (ru, cu_, vu), (rb, cb, vb))[0]

    @cached_property
    def grad_p(self) -> sp.csr_matrix:
        return (-self.div.T).tocsr()

    @cached_property
    def _lap_v(self):
        ru, cu_, vu, rb, cb, vb = [], [], [], [], [], []
        for a in range(3):
            idx0 = self._unknown_index_arrays(a)
            row = self.uidx[a][tuple(idx0)]
            for b in range(3):
                if self.n[b] == 1:
                    continue
                hb2 = self.h[b] ** 2
                for off in (1, -1):
                    idx = list(idx0)
                    idx[b] = idx0[b] + off
                    self._acc(ru, cu_, vu, rb, cb, vb, row, 1.0 / hb2, self.resolve(a, idx))
                ru.append(row); cu_.append(row); vu.append(np.full(len(row), -2.0 / hb2))
        return self._finish(self.nu, (ru, cu_, vu), (rb, cb, vb))

    @property
    def lap_v0(self) -> sp.csr_matrix:
        return self._lap_v[0]

    @property
    def lap_vb(self) -> sp.csr_matrix:
        return self._lap_v[1]

    def _second_difference(self, b: int) -> sp.csr_matrix:
        """Unscaled cell second difference along ``b`` with mirror (Neumann) walls."""
        cidx = self._cell_index_arrays()
        row = self._cell_flat(cidx)
        rows, cols, vals = [], [], []
        for off in (1, -1):
            idx = list(cidx)
            idx[b] = cidx[b] + off
            if self.periodic[b]:
                idx[b] %= self.n[b]
                ok = np.ones(len(row), dtype=bool)
            else:
                ok = (idx[b] >= 0) & (idx[b] < self.n[b])
            col = self._cell_flat([np.where(ok, x, 0) for x in idx])[ok]
            rows += [row[ok], row[ok]]
            cols += [col, row[ok]]
            vals += [np.ones(ok.sum()), -np.ones(ok.sum())]
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.ncell,) * 2
        )

    @cached_property
    def d2(self) -> list:
        return [self._second_difference(b) for b in range(3)]

    @cached_property
    def lap_s(self) -> sp.csr_matrix:
        """Cell Laplacian with homogeneous Neumann walls."""
        return sum(self.d2[b] / self.h[b] ** 2 for b in range(3)).tocsr()

    @cached_property
    def _grad_full(self):
        """Rows ``(j*3 + m)*ncell + c`` hold ``d_m V_j`` at cell ``c``."""
        cidx = self._cell_index_arrays()
        cell = self._cell_flat(cidx)
        nc = self.ncell
        ru, cu_, vu, rb, cb, vb = [], [], [], [], [], []
        for j in range(3):
            for m in range(3):
                row = (j * 3 + m) * nc + cell
                if m == j:
                    for off, sgn in ((1, 1.0), (0, -1.0)):
                        idx = list(cidx)
                        idx[j] = cidx[j] + off
                        self._acc(ru, cu_, vu, rb, cb, vb, row, sgn / self.h[j], self.resolve(j, idx))
                    continue
                if self.n[m] == 1:
                    continue
                for sm, sgn in ((1, 1.0), (-1, -1.0)):
                    for off in (0, 1):
                        idx = list(cidx)
                        idx[j] = cidx[j] + off
                        idx[m] = cidx[m] + sm
                        coef = sgn * 0.25 / self.h[m]
                        self._acc(ru, cu_, vu, rb, cb, vb, row, coef, self.resolve(j, idx))
        return self._finish(9 * nc, (ru, cu_, vu), (rb, cb, vb))

    @property
    def grad_full0(self):
        return self._grad_full[0]

    @property
    def grad_fullb(self):
        return self._grad_full[1]

    @cached_property
    def _to_dev(self) -> sp.csr_matrix:
        """Map full-gradient rows to deviatoric coordinates, rows ``c*5 + a``."""
        nc = self.ncell
        rows, cols, vals = [], [], []
        cell = np.arange(nc)
        for a in range(5):
            for j in range(3):
                for m in range(3):
                    f = T.FRAME[a, j, m]
                    if f == 0.0:
                        continue
                    rows.append(cell * 5 + a)
                    cols.append((j * 3 + m) * nc + cell)
                    vals.append(np.full(nc, f))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(5 * nc, 9 * nc)
        )

    @cached_property
    def gdev0(self) -> sp.csr_matrix:
        return (self._to_dev @ self.grad_full0).tocsr()

    @cached_property
    def gdevb(self) -> sp.csr_matrix:
        return (self._to_dev @ self.grad_fullb).tocsr()

    def gradient_cells(self, vec, bvec=None) -> np.ndarray:
        """``(ncell, 3, 3)`` array with ``[c, j, m] = d_m V_j``."""
        g = self.grad_full0 @ vec
        if bvec is not None and bvec.size:
            g = g + self.grad_fullb @ bvec
        return np.moveaxis(g.reshape(3, 3, self.ncell), -1, 0)

    def div_tensor_field(self, f_cells: np.ndarray) -> np.ndarray:
        """Discrete ``Div F`` for a full tensor field ``(ncell, 3, 3)``, adjoint of ``-grad``."""
        flat = np.moveaxis(np.asarray(f_cells), 0, -1).reshape(-1)
        return -(self.grad_full0.T @ flat)

    # transport ----------------------------------------------------------------

    @cached_property
    def _vel_adv_pattern(self):
        """Static sparsity of the skew advection matrix for velocity."""
        rows, cols, p1, p2, hb = [], [], [], [], []
        foff = np.concatenate([[0], np.cumsum([int(np.prod(self.face_shape(a))) for a in range(3)])])
        for a in range(3):
            idx0 = self._unknown_index_arrays(a)
            row = self.uidx[a][tuple(idx0)]
            shape = self.face_shape(a)
            for b in range(3):
                if self.n[b] == 1:
                    continue
                nb_idx = list(idx0)
                nb_idx[b] = idx0[b] + 1
                if self.periodic[b]:
                    nb_idx[b] %= shape[b]
                    ok = np.ones(len(row), dtype=bool)
                else:
                    ok = nb_idx[b] < shape[b]
                nb_idx = [np.where(ok, x, 0) for x in nb_idx]
                col = self.uidx[a][tuple(nb_idx)]
                ok &= col >= 0
                if b == a:
                    q1 = foff[a] + np.ravel_multi_index(tuple(idx0), shape)
                    q2 = foff[a] + np.ravel_multi_index(tuple(nb_idx), shape)
                else:
                    fb = self.face_shape(b)
                    base = list(idx0)
                    base[b] = idx0[b] + 1
                    if self.periodic[b]:
                        base[b] %= fb[b]
                    left = list(base)
                    left[a] = base[a] - 1
                    if self.periodic[a]:
                        left[a] %= fb[a]
                    base = [np.where(ok, x, 0) for x in base]
                    left = [np.where(ok, x, 0) for x in left]
                    q1 = foff[b] + np.ravel_multi_index(tuple(left), fb)
                    q2 = foff[b] + np.ravel_multi_index(tuple(base), fb)
                rows.append(row[ok]); cols.append(col[ok])
                p1.append(q1[ok]); p2.append(q2[ok]); hb.append(np.full(ok.sum(), self.h[b]))
        return self._pattern(self.nu, rows, cols, p1, p2, hb)

    @cached_property
    def _cell_adv_pattern(self):
        rows, cols, p1, p2, hb = [], [], [], [], []
        foff = np.concatenate([[0], np.cumsum([int(np.prod(self.face_shape(a))) for a in range(3)])])
        cidx = self._cell_index_arrays()
        row = self._cell_flat(cidx)
        for b in range(3):
            if self.n[b] == 1:
                continue
            nb_idx = list(cidx)
            nb_idx[b] = cidx[b] + 1
            if self.periodic[b]:
                nb_idx[b] %= self.n[b]
                ok = np.ones(len(row), dtype=bool)
            else:
                ok = nb_idx[b] < self.n[b]
            nb_idx = [np.where(ok, x, 0) for x in nb_idx]
            col = self._cell_flat(nb_idx)
            face = list(cidx)
            face[b] = cidx[b] + 1
            if self.periodic[b]:
                face[b] %= self.face_shape(b)[b]
            face = [np.where(ok, x, 0) for x in face]
            q = foff[b] + np.ravel_multi_index(tuple(face), self.face_shape(b))
            rows.append(row[ok]); cols.append(col[ok]); p1.append(q[ok]); p2.append(q[ok])
            hb.append(np.full(ok.sum(), self.h[b]))
        return self._pattern(self.ncell, rows, cols, p1, p2, hb)

    @staticmethod
    def _pattern(n, rows, cols, p1, p2, hb):
        r, c = np.concatenate(rows), np.concatenate(cols)
        q1, q2, h = np.concatenate(p1), np.concatenate(p2), np.concatenate(hb)
        keep = r != c
        r, c, q1, q2, h = r[keep], c[keep], q1[keep], q2[keep], h[keep]
        rr = np.concatenate([r, c])
        cc = np.concatenate([c, r])
        ids = np.arange(1, len(rr) + 1, dtype=float)
        m = sp.csr_matrix((ids, (rr, cc)), shape=(n, n))
        m.sum_duplicates()
        if m.nnz != len(rr):
            raise GridError("advection stencil has duplicate entries; grid too small")
        perm = m.data.astype(np.int64) - 1
        return m, perm, q1, q2, h

    def _apply_pattern(self, pattern, uflat):
        m, perm, q1, q2, h = pattern
        val = 0.25 * (uflat[q1] + uflat[q2]) / h
        both = np.concatenate([val, -val])
        out = m.copy()
        out.data = both[perm]
        return out

    def full_face_flat(self, vec) -> np.ndarray:
        return np.concatenate([f.ravel() for f in self.to_faces(vec)])

    def velocity_advection(self, U_vec) -> sp.csr_matrix:
        """Skew matrix ``C`` with ``C u ~ (U . grad) u`` for divergence-free ``U``."""
        return self._apply_pattern(self._vel_adv_pattern, self.full_face_flat(U_vec))

    def cell_advection(self, U_vec) -> sp.csr_matrix:
        """Skew matrix ``C`` with ``C s ~ U . grad s`` for cell scalars."""
        return self._apply_pattern(self._cell_adv_pattern, self.full_face_flat(U_vec))

    def cell_speed(self, U_vec) -> list:
        """``|U_b|`` averaged to cell centres, per axis."""
        faces = self.to_faces(U_vec)
        out = []
        for b in range(3):
            f = faces[b]
            if self.periodic[b]:
                avg = 0.5 * (f + np.roll(f, -1, axis=b))
            else:
                sl0 = [slice(None)] * 3; sl1 = [slice(None)] * 3
                sl0[b] = slice(0, -1); sl1[b] = slice(1, None)
                avg = 0.5 * (f[tuple(sl0)] + f[tuple(sl1)])
            out.append(np.abs(avg).ravel())
        return out

    def upwind_dissipation(self, U_vec, coef: float = 0.25) -> sp.csr_matrix:
        """Symmetric negative semidefinite fourth-order dissipation for cell fields."""
        speed = self.cell_speed(U_vec)
        out = sp.csr_matrix((self.ncell, self.ncell))
        for b in range(3):
            if self.n[b] == 1:
                continue
            d = self.d2[b]
            out = out - (coef / self.h[b]) * (d @ sp.diags(speed[b]) @ d)
        return out.tocsr()

    # inner products -------------------------------------------------------------

    def ip(self, x, y) -> float:
        return self.vol * float(np.dot(np.ravel(x), np.ravel(y)))
