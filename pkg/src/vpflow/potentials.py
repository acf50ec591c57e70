"""Convex plastic potentials on deviatoric tensors, their proximal maps and
Moreau envelopes.

Every function broadcasts over leading axes of ``(..., 5)`` coordinate arrays
(see :mod:`vpflow.tensor`).  ``epsilon = 0`` always means the exact,
possibly nonsmooth and extended-valued potential.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import tensor as T

BOUNDARY_RTOL = 1e-12
NEWTON_TOL = 1e-12
NEWTON_MAXIT = 100
FALLBACK_MAXIT = 5000


class InvalidPotential(ValueError):
    def __init__(self, key: str, constraint: str):
        super().__init__(f"potential.{key}: {constraint}")
        self.key = key
        self.constraint = constraint


class NonsmoothPoint(ValueError):
    """The potential has no unique differential at the requested point."""


class NoConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class Quadratic:
    a: float = 1.0

    def __post_init__(self):
        if not self.a >= 0:
            raise InvalidPotential("a", "must be >= 0")


@dataclass(frozen=True)
class YieldBall:
    """``a/2 |S|^2`` inside the ball ``|S| <= sigma_yield``, ``+inf`` outside."""

    a: float = 0.0
    sigma_yield: float = 1.0

    def __post_init__(self):
        if not self.a >= 0:
            raise InvalidPotential("a", "must be >= 0")
        if not self.sigma_yield > 0:
            raise InvalidPotential("sigma_yield", "must be > 0")


@dataclass(frozen=True)
class Radial:
    """``P(S) = p(|S|)`` with ``p`` convex and piecewise quadratic on [0, inf).

    On ``[breaks[i], breaks[i+1])`` the derivative is
    ``slopes[i] + curvatures[i] * (r - breaks[i])``; ``breaks[0]`` must be 0.
    Beyond ``cap`` (if given) the potential is ``+inf``.
    """

    breaks: tuple = (0.0,)
    slopes: tuple = (0.0,)
    curvatures: tuple = (1.0,)
    cap: float | None = None

    def __post_init__(self):
        b = tuple(float(x) for x in self.breaks)
        c = tuple(float(x) for x in self.slopes)
        k = tuple(float(x) for x in self.curvatures)
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "slopes", c)
        object.__setattr__(self, "curvatures", k)
        if not (len(b) == len(c) == len(k) >= 1):
            raise InvalidPotential("breaks", "breaks, slopes and curvatures need equal nonzero length")
        if b[0] != 0.0:
            raise InvalidPotential("breaks", "first break must be 0")
        if any(b[i + 1] <= b[i] for i in range(len(b) - 1)):
            raise InvalidPotential("breaks", "must be strictly increasing")
        if c[0] < 0:
            raise InvalidPotential("slopes", "first slope must be >= 0")
        if any(x < 0 for x in k):
            raise InvalidPotential("curvatures", "must be >= 0 (convexity)")
        for i in range(len(b) - 1):
            left = c[i] + k[i] * (b[i + 1] - b[i])
            if c[i + 1] < left - 1e-14 * max(1.0, abs(left)):
                raise InvalidPotential("slopes", "derivative must be nondecreasing (convexity)")
        if self.cap is not None and not self.cap > 0:
            raise InvalidPotential("cap", "must be > 0")


@dataclass(frozen=True)
class PolyDet:
    """``a2/2 |S|^2 + a4/4 |S|^4 + a6/6 (|S|^6 + b det(S)^2)`` with ``|b| <= 4``."""

    a2: float = 1.0
    a4: float = 0.0
    a6: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        for key in ("a2", "a4", "a6"):
            if not getattr(self, key) >= 0:
                raise InvalidPotential(key, "must be >= 0")
        if not abs(self.b) <= 4:
            raise InvalidPotential("b", "|b| <= 4 is required for convexity")


PotentialSpec = Union[Quadratic, YieldBall, Radial, PolyDet]


def as_radial(spec: YieldBall | Quadratic) -> Radial:
    if isinstance(spec, Quadratic):
        return Radial((0.0,), (0.0,), (spec.a,), None)
    return Radial((0.0,), (0.0,), (spec.a,), spec.sigma_yield)


# --------------------------------------------------------------------------
# radial profiles


def radial_profile(spec: Radial, r: np.ndarray) -> np.ndarray:
    """Value of the 1-D profile ``p(r)`` for ``r >= 0``."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    b = spec.breaks + (np.inf,)
    for i in range(len(spec.slopes)):
        ell = np.clip(r - b[i], 0.0, b[i + 1] - b[i])
        out = out + spec.slopes[i] * ell + 0.5 * spec.curvatures[i] * ell * ell
    if spec.cap is not None:
        out = np.where(r > spec.cap * (1 + BOUNDARY_RTOL), np.inf, out)
    return out


def radial_derivative(spec: Radial, r: np.ndarray) -> np.ndarray:
    """Right derivative ``p'(r+)``."""
    r = np.asarray(r, dtype=float)
    idx = np.searchsorted(np.asarray(spec.breaks), r, side="right") - 1
    idx = np.clip(idx, 0, len(spec.breaks) - 1)
    br = np.asarray(spec.breaks)[idx]
    return np.asarray(spec.slopes)[idx] + np.asarray(spec.curvatures)[idx] * (r - br)


def radial_prox_1d(spec: Radial, rho: np.ndarray, lam: float) -> np.ndarray:
    """Minimiser over ``r >= 0`` of ``(r - rho)^2 / (2 lam) + p(r)``.

    ``r + lam * dp(r)`` is a monotone piecewise-affine graph, so the root is
    found exactly interval by interval.
    """
    rho = np.asarray(rho, dtype=float)
    out = np.full(rho.shape, np.nan)
    b = spec.breaks + (np.inf,)
    c, k = spec.slopes, spec.curvatures
    out = np.where(rho <= lam * c[0], 0.0, out)
    for i in range(len(c)):
        if i > 0:
            left = b[i] + lam * (c[i - 1] + k[i - 1] * (b[i] - b[i - 1]))
            right = b[i] + lam * c[i]
            out = np.where(np.isnan(out) & (rho >= left) & (rho <= right), b[i], out)
        cand = (rho - lam * c[i] + lam * k[i] * b[i]) / (1.0 + lam * k[i])
        ok = np.isnan(out) & (cand >= b[i]) & (cand <= b[i + 1])
        out = np.where(ok, cand, out)
    if spec.cap is not None:
        out = np.minimum(out, spec.cap)
    return out


def _radial_scale(x: np.ndarray, r_new: np.ndarray, r: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        fac = np.where(r > 0, r_new / np.where(r > 0, r, 1.0), 0.0)
    return x * fac[..., None]


# --------------------------------------------------------------------------
# PolyDet internals


def _polydet_parts(spec: PolyDet, s: np.ndarray):
    n2 = T.dot(s, s)
    d = T.det3(s)
    g_det = T.dev_sym_project(T.cofactor(s))
    return n2, d, g_det


def _polydet_value(spec: PolyDet, s):
    n2, d, _ = _polydet_parts(spec, s)
    return 0.5 * spec.a2 * n2 + 0.25 * spec.a4 * n2**2 + spec.a6 / 6.0 * (n2**3 + spec.b * d * d)


def _polydet_grad(spec: PolyDet, s):
    n2, d, g_det = _polydet_parts(spec, s)
    lin = spec.a2 + spec.a4 * n2 + spec.a6 * n2 * n2
    return lin[..., None] * s + (spec.a6 * spec.b / 3.0) * d[..., None] * g_det


def _polydet_hessian(spec: PolyDet, s):
    """Exact 5x5 Hessian; the cofactor is quadratic so its derivative is
    ``cof(S + H) - cof(S) - cof(H)``."""
    n2, d, g_det = _polydet_parts(spec, s)
    eye = np.eye(5)
    lin = spec.a2 + spec.a4 * n2 + spec.a6 * n2 * n2
    h = lin[..., None, None] * eye
    h = h + (2 * spec.a4 + 4 * spec.a6 * n2)[..., None, None] * s[..., :, None] * s[..., None, :]
    if spec.a6 * spec.b != 0.0:
        sm = T.to_matrix(s)
        cof_s = T.cofactor(sm)
        hdet = np.empty(s.shape[:-1] + (5, 5))
        for j in range(5):
            ej = T.FRAME[j]
            dcof = T.cofactor(sm + ej) - cof_s - T.cofactor(ej)
            hdet[..., :, j] = T.dev_sym_project(dcof)
        h = h + (spec.a6 * spec.b / 3.0) * (
            g_det[..., :, None] * g_det[..., None, :] + d[..., None, None] * hdet
        )
    return h


def _polydet_prox(spec: PolyDet, x: np.ndarray, lam: float) -> np.ndarray:
    shape = x.shape
    xf = x.reshape(-1, 5)
    y = xf / (1.0 + lam * spec.a2)

    def phi(yy, xx):
        return T.dot(yy - xx, yy - xx) / (2 * lam) + _polydet_value(spec, yy)

    active = np.ones(len(xf), dtype=bool)
    for _ in range(NEWTON_MAXIT):
        if not active.any():
            break
        ya, xa = y[active], xf[active]
        g = (ya - xa) / lam + _polydet_grad(spec, ya)
        h = np.eye(5) / lam + _polydet_hessian(spec, ya)
        step = -np.linalg.solve(h, g[..., None])[..., 0]
        slope = T.dot(g, step)
        bad = ~(slope < 0)
        step[bad] = -g[bad]
        slope[bad] = -T.dot(g[bad], g[bad])
        t = np.ones(len(ya))
        f0 = phi(ya, xa)
        for _ls in range(60):
            trial = ya + t[:, None] * step
            fail = phi(trial, xa) > f0 + 1e-4 * t * slope + 1e-15 * np.abs(f0)
            if not fail.any():
                break
            t[fail] *= 0.5
        y_new = ya + t[:, None] * step
        scale = 1.0 + T.norm(xa)
        done = T.norm(y_new - ya) <= NEWTON_TOL * scale
        y[active] = y_new
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    if active.any():
        y = _gradient_fallback(spec, xf, y, lam, active)
    return y.reshape(shape)


def _gradient_fallback(spec, xf, y, lam, active):
    idx = np.flatnonzero(active)
    ya, xa = y[idx], xf[idx]
    for _ in range(FALLBACK_MAXIT):
        g = (ya - xa) / lam + _polydet_grad(spec, ya)
        h = np.eye(5) / lam + _polydet_hessian(spec, ya)
        step_len = 1.0 / np.linalg.eigvalsh(h)[:, -1]
        ya = ya - step_len[:, None] * g
        if np.all(T.norm(g) * lam <= NEWTON_TOL * (1.0 + T.norm(xa))):
            y[idx] = ya
            return y
    raise NoConvergence("PolyDet proximal map did not converge")


# --------------------------------------------------------------------------
# public operations


def value(spec: PotentialSpec, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if isinstance(spec, PolyDet):
        return _polydet_value(spec, s)
    if isinstance(spec, Quadratic):
        return 0.5 * spec.a * T.dot(s, s)
    rad = as_radial(spec) if isinstance(spec, YieldBall) else spec
    return radial_profile(rad, T.norm(s))


def smooth_subgradient(spec: PotentialSpec, s: np.ndarray) -> np.ndarray:
    """Gradient of ``spec`` at ``s``; raises NonsmoothPoint where it is not unique."""
    s = np.asarray(s, dtype=float)
    if isinstance(spec, PolyDet):
        return _polydet_grad(spec, s)
    if isinstance(spec, Quadratic):
        return spec.a * s
    rad = as_radial(spec) if isinstance(spec, YieldBall) else spec
    r = T.norm(s)
    if rad.cap is not None and np.any(r >= rad.cap * (1 - BOUNDARY_RTOL)):
        raise NonsmoothPoint("point on or outside the boundary of the admissible ball")
    if rad.slopes[0] > 0 and np.any(r == 0):
        raise NonsmoothPoint("kink of the profile at the origin")
    for i in range(1, len(rad.breaks)):
        left = rad.slopes[i - 1] + rad.curvatures[i - 1] * (rad.breaks[i] - rad.breaks[i - 1])
        if rad.slopes[i] != left and np.any(np.abs(r - rad.breaks[i]) <= 1e-14 * rad.breaks[i]):
            raise NonsmoothPoint(f"kink of the profile at r = {rad.breaks[i]}")
    return _radial_scale(s, radial_derivative(rad, r), r)


def prox(spec: PotentialSpec, x: np.ndarray, lam: float) -> np.ndarray:
    """``argmin_Y |Y - X|^2 / (2 lam) + P(Y)``."""
    x = np.asarray(x, dtype=float)
    if not lam > 0:
        raise ValueError("prox step must be > 0")
    if isinstance(spec, Quadratic):
        return x / (1.0 + lam * spec.a)
    if isinstance(spec, YieldBall):
        y = x / (1.0 + lam * spec.a)
        r = T.norm(y)
        over = r > spec.sigma_yield
        fac = np.where(over, spec.sigma_yield / np.where(over, r, 1.0), 1.0)
        return y * fac[..., None]
    if isinstance(spec, Radial):
        r = T.norm(x)
        return _radial_scale(x, radial_prox_1d(spec, r, lam), r)
    return _polydet_prox(spec, x, lam)


def moreau_value(spec: PotentialSpec, x: np.ndarray, eps: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if eps == 0:
        return value(spec, x)
    y = prox(spec, x, eps)
    return T.dot(x - y, x - y) / (2 * eps) + value(spec, y)


def moreau_grad(spec: PotentialSpec, x: np.ndarray, eps: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if eps == 0:
        return smooth_subgradient(spec, x)
    return (x - prox(spec, x, eps)) / eps


def prox_moreau(spec: PotentialSpec, x: np.ndarray, lam: float, eps: float) -> np.ndarray:
    """Proximal map of the envelope ``P_eps`` with step ``lam``."""
    x = np.asarray(x, dtype=float)
    if eps == 0:
        return prox(spec, x, lam)
    return x - (lam / (lam + eps)) * (x - prox(spec, x, lam + eps))


def potential_from_params(kind: str, params: dict) -> PotentialSpec:
    """Construct a spec from a kind name and a flat parameter dict."""
    kinds = {"quadratic": Quadratic, "yield_ball": YieldBall, "radial": Radial, "polydet": PolyDet}
    if kind not in kinds:
        raise InvalidPotential("kind", f"must be one of {sorted(kinds)}")
    return kinds[kind](**params)
