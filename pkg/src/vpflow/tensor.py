"""Algebra of symmetric trace-free (deviatoric) 3x3 tensors.

A deviatoric tensor is stored as its 5 coordinates in a fixed orthonormal
frame of the deviatoric subspace, so symmetry and trace-freeness hold by
construction and the Frobenius product reduces to a dot product of
coordinates.  All functions broadcast over leading axes: a DevTensor is an
array of shape ``(..., 5)`` and a general matrix an array ``(..., 3, 3)``.
"""

from __future__ import annotations

import numpy as np

_S2 = np.sqrt(2.0)
_S6 = np.sqrt(6.0)

#: Orthonormal frame of symmetric trace-free 3x3 matrices, shape (5, 3, 3).
FRAME = np.zeros((5, 3, 3))
FRAME[0] = np.diag([1.0, -1.0, 0.0]) / _S2
FRAME[1] = np.diag([1.0, 1.0, -2.0]) / _S6
FRAME[2, 0, 1] = FRAME[2, 1, 0] = 1.0 / _S2
FRAME[3, 0, 2] = FRAME[3, 2, 0] = 1.0 / _S2
FRAME[4, 1, 2] = FRAME[4, 2, 1] = 1.0 / _S2
FRAME.setflags(write=False)

ANTISYM_TOL = 1e-12


class AntisymmetryError(ValueError):
    """Raised when a spin tensor is not antisymmetric."""


def to_matrix(s: np.ndarray) -> np.ndarray:
    """Full 3x3 view of deviatoric coordinates ``s`` of shape (..., 5)."""
    return np.einsum("...a,aij->...ij", np.asarray(s, dtype=float), FRAME)


def dev_sym_project(m: np.ndarray) -> np.ndarray:
    """Coordinates of ``0.5*(M + M^T) - tr(M)/3 * I``.

    The frame is orthonormal and spans the deviatoric subspace, so the
    coordinates are simply Frobenius products with the frame elements.
    """
    return np.einsum("...ij,aij->...a", np.asarray(m, dtype=float), FRAME)


def strain_rate(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def spin(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    return 0.5 * (g - np.swapaxes(g, -1, -2))


def jaumann_commutator(s: np.ndarray, w: np.ndarray, check: bool = True) -> np.ndarray:
    """Return ``S W - W S`` for deviatoric ``S`` and antisymmetric ``W``.

    The commutator of a symmetric and an antisymmetric matrix is symmetric
    and trace-free, so projecting back onto the frame loses nothing.
    """
    w = np.asarray(w, dtype=float)
    if check:
        defect = np.abs(w + np.swapaxes(w, -1, -2)).max(initial=0.0)
        scale = max(1.0, float(np.abs(w).max(initial=0.0)))
        if defect > ANTISYM_TOL * scale:
            raise AntisymmetryError(f"spin tensor not antisymmetric (defect {defect:.3e})")
    sm = to_matrix(s)
    return dev_sym_project(sm @ w - w @ sm)


def cofactor(m: np.ndarray) -> np.ndarray:
    """Cofactor matrix of a 3x3 matrix (or of deviatoric coordinates)."""
    m = np.asarray(m, dtype=float)
    if m.shape[-1] == 5:
        m = to_matrix(m)
    a = m
    c = np.empty_like(a)
    c[..., 0, 0] = a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1]
    c[..., 0, 1] = a[..., 1, 2] * a[..., 2, 0] - a[..., 1, 0] * a[..., 2, 2]
    c[..., 0, 2] = a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]
    c[..., 1, 0] = a[..., 0, 2] * a[..., 2, 1] - a[..., 0, 1] * a[..., 2, 2]
    c[..., 1, 1] = a[..., 0, 0] * a[..., 2, 2] - a[..., 0, 2] * a[..., 2, 0]
    c[..., 1, 2] = a[..., 0, 1] * a[..., 2, 0] - a[..., 0, 0] * a[..., 2, 1]
    c[..., 2, 0] = a[..., 0, 1] * a[..., 1, 2] - a[..., 0, 2] * a[..., 1, 1]
    c[..., 2, 1] = a[..., 0, 2] * a[..., 1, 0] - a[..., 0, 0] * a[..., 1, 2]
    c[..., 2, 2] = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    return c


def det3(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape[-1] == 5:
        m = to_matrix(m)
    return (
        m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
        - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
        + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0])
    )


def frobenius(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Frobenius product ``A:B = A_jk B_jk`` of two (..., 3, 3) arrays."""
    return np.einsum("...ij,...ij->...", np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def dot(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Frobenius product of two deviatoric tensors given by coordinates."""
    return np.einsum("...a,...a->...", s, t)


def norm(s: np.ndarray) -> np.ndarray:
    return np.sqrt(dot(s, s))


def from_full(m: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Coordinates of a matrix that must already be symmetric and trace-free."""
    m = np.asarray(m, dtype=float)
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if np.abs(m - np.swapaxes(m, -1, -2)).max(initial=0.0) > atol * scale:
        raise ValueError("matrix is not symmetric")
    if np.abs(np.trace(m, axis1=-2, axis2=-1)).max(initial=0.0) > atol * scale:
        raise ValueError("matrix is not trace-free")
    return dev_sym_project(m)
