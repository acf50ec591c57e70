"""Named analytic profiles for initial data, forcing and boundary data.

A profile is a separable product of a spatial shape and a time envelope.
Wavenumbers are integers relative to the box, i.e. ``k_b * 2 pi x_b / L_b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T

SPATIAL_KINDS = ("constant", "fourier_mode", "taylor_green", "gaussian_bump", "lid_tangential")
TIME_KINDS = ("steady", "sinusoidal", "decaying")


class ProfileError(ValueError):
    def __init__(self, key: str, constraint: str):
        super().__init__(f"{key}: {constraint}")
        self.key = key
        self.constraint = constraint


@dataclass(frozen=True)
class Profile:
    kind: str = "constant"
    amplitude: float = 1.0
    k: tuple = (1, 0, 0)
    parity: str = "cos"
    direction: tuple = (1.0, 0.0, 0.0)
    component: int = 0
    center: tuple = (0.5, 0.5, 0.5)
    width: float = 0.1
    time: str = "steady"
    omega: float = 1.0
    rate: float = 1.0

    def __post_init__(self):
        if self.kind not in SPATIAL_KINDS:
            raise ProfileError("kind", f"must be one of {', '.join(SPATIAL_KINDS)}")
        if self.time not in TIME_KINDS:
            raise ProfileError("time", f"must be one of {', '.join(TIME_KINDS)}")
        if self.parity not in ("cos", "sin"):
            raise ProfileError("parity", "must be cos or sin")
        if not 0 <= int(self.component) < 5:
            raise ProfileError("component", "must be in 0..4")
        if self.kind == "gaussian_bump" and not self.width > 0:
            raise ProfileError("width", "must be > 0")
        if self.time == "decaying" and not self.rate >= 0:
            raise ProfileError("rate", "must be >= 0")
        object.__setattr__(self, "k", tuple(int(x) for x in self.k))
        object.__setattr__(self, "direction", tuple(float(x) for x in self.direction))
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))

    # time ------------------------------------------------------------------

    def envelope(self, t: float) -> float:
        if self.time == "steady":
            return 1.0
        if self.time == "sinusoidal":
            return float(np.cos(self.omega * t))
        return float(np.exp(-self.rate * t))

    # space -----------------------------------------------------------------

    def scalar(self, x: np.ndarray, L, periodic=(True, True, True)) -> np.ndarray:
        """Spatial factor of non-vector kinds, shape (P,)."""
        x = np.asarray(x, dtype=float)
        L = np.asarray(L, dtype=float)
        if self.kind == "constant":
            return np.ones(len(x))
        if self.kind == "fourier_mode":
            arg = (2 * np.pi * x / L) @ np.asarray(self.k, float)
            return np.cos(arg) if self.parity == "cos" else np.sin(arg)
        if self.kind == "gaussian_bump":
            c = np.asarray(self.center) * L
            return np.exp(-np.sum((x - c) ** 2, axis=1) / (2 * self.width**2))
        if self.kind == "lid_tangential":
            out = np.ones(len(x))
            for b in range(3):
                if not periodic[b]:
                    s = np.clip(x[:, b] / L[b], 0.0, 1.0)
                    out = out * 16.0 * s * s * (1 - s) * (1 - s)
            return out
        raise ProfileError("kind", "taylor_green has no scalar form")

    def vector(self, t: float, x: np.ndarray, L, periodic=(True, True, True)) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        amp = self.amplitude * self.envelope(t)
        if self.kind == "taylor_green":
            k0 = max(self.k[0], 1)
            kx = 2 * np.pi * k0 / L[0]
            ky = 2 * np.pi * (self.k[1] or k0) / L[1]
            out = np.zeros((len(x), 3))
            out[:, 0] = amp * np.sin(kx * x[:, 0]) * np.cos(ky * x[:, 1])
            out[:, 1] = -amp * (kx / ky) * np.cos(kx * x[:, 0]) * np.sin(ky * x[:, 1])
            return out
        return amp * self.scalar(x, L, periodic)[:, None] * np.asarray(self.direction)[None, :]

    def tensor(self, t: float, x: np.ndarray, L, periodic=(True, True, True)) -> np.ndarray:
        """Deviatoric coordinates, shape (P, 5)."""
        amp = self.amplitude * self.envelope(t)
        if self.kind == "taylor_green":
            raise ProfileError("kind", "taylor_green is a velocity profile")
        out = np.zeros((len(x), 5))
        out[:, int(self.component)] = amp * self.scalar(x, L, periodic)
        return out

    def matrix(self, t: float, x: np.ndarray, L, periodic=(True, True, True)) -> np.ndarray:
        return T.to_matrix(self.tensor(t, x, L, periodic))


@dataclass
class FieldSum:
    """Sum of profiles evaluated through one of the ``vector``/``tensor`` methods."""

    terms: list = field(default_factory=list)

    def vector(self, t, x, L, periodic=(True, True, True)):
        out = np.zeros((len(x), 3))
        for p in self.terms:
            out = out + p.vector(t, x, L, periodic)
        return out

    def tensor(self, t, x, L, periodic=(True, True, True)):
        out = np.zeros((len(x), 5))
        for p in self.terms:
            out = out + p.tensor(t, x, L, periodic)
        return out
