"""On-disk formats.

Snapshot file (one per output time), all little-endian:

    offset  0  8s   magic b"VPFLOW01"
            8  3I   cells per axis
           20  I    periodic bits (bit a set when axis a is periodic)
           24  d    time
           32  3d   box lengths
           56  8x   padding

followed by float64 arrays in this order, each row-major: u (x-faces), v
(y-faces), w (z-faces), the five stress coordinates as ``(5, nx, ny, nz)``,
and the pressure ``(nx, ny, nz)``.  Face arrays include every face, walls
too (those hold zeros), so x-faces are ``(nx + 1, ny, nz)`` on a walled
x axis and ``(nx, ny, nz)`` on a periodic one.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .mac import Grid
from .solver import GridState

MAGIC = b"VPFLOW01"
HEADER = struct.Struct("<8s3II d3d8x")
assert HEADER.size == 64


class SnapshotError(ValueError):
    pass


def write_snapshot(path, grid: Grid, state: GridState) -> None:
    bits = sum(1 << a for a in range(3) if grid.periodic[a])
    head = HEADER.pack(MAGIC, *grid.n, bits, float(state.t), *grid.L)
    shape = grid.n
    parts = [np.ascontiguousarray(f, dtype="<f8") for f in grid.to_faces(state.V)]
    parts.append(np.ascontiguousarray(state.S.reshape(*shape, 5).transpose(3, 0, 1, 2), dtype="<f8"))
    parts.append(np.ascontiguousarray(state.p.reshape(shape), dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(head)
        for a in parts:
            fh.write(a.tobytes())


def read_snapshot(path) -> tuple:
    """Return ``(grid, state)``."""
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise SnapshotError(f"{path}: truncated header")
    magic, nx, ny, nz, bits, t, lx, ly, lz = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    grid = Grid((nx, ny, nz), (lx, ly, lz), tuple(bool(bits >> a & 1) for a in range(3)))
    shapes = [grid.face_shape(a) for a in range(3)] + [(5, nx, ny, nz), (nx, ny, nz)]
    need = HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(data) != need:
        raise SnapshotError(f"{path}: expected {need} bytes, found {len(data)}")
    arrs, off = [], HEADER.size
    for s in shapes:
        n = int(np.prod(s))
        arrs.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(s).astype(float))
        off += 8 * n
    V = grid.from_faces(arrs[:3])
    S = arrs[3].transpose(1, 2, 3, 0).reshape(-1, 5).copy()
    p = arrs[4].ravel().copy()
    return grid, GridState(float(t), V, S, p)


def snapshot_name(i: int) -> str:
    return f"snapshot_{i:06d}.bin"


def write_run(out_dir, grid: Grid, traj_states, ledger, every: int = 1) -> list:
    """Write ledger.csv and snapshots (every ``every``-th output) to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ledger.to_csv(out / "ledger.csv")
    paths = []
    for i, st in enumerate(traj_states):
        if i % every == 0 or i == len(traj_states) - 1:
            p = out / snapshot_name(i)
            write_snapshot(p, grid, st)
            paths.append(p)
    return paths


def read_run(out_dir) -> tuple:
    """Return ``(grid, states, ledger)``; raises if snapshots are missing."""
    from .ledger import EnergyLedger

    out = Path(out_dir)
    ledger = EnergyLedger.from_csv(out / "ledger.csv")
    files = sorted(f for f in os.listdir(out) if f.startswith("snapshot_") and f.endswith(".bin"))
    if not files:
        raise SnapshotError(f"{out}: no snapshots")
    grid, states = None, []
    for f in files:
        g, st = read_snapshot(out / f)
        if grid is not None and g != grid:
            raise SnapshotError(f"{f}: grid differs from the first snapshot")
        grid = g
        states.append(st)
    return grid, states, ledger
