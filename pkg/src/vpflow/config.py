"""Run configuration: a flat ``section.key = value`` document.

Every key has exactly one dot.  ``#`` starts a comment.  Lists are space or
comma separated.  Analytic profiles occupy a slot (``initial.velocity``,
``initial.stress``, ``forcing.f0``, ``forcing.f1``, ``boundary.<wall>``):
``slot = kind`` names the shape and ``slot_<param> = value`` sets its
parameters, e.g. ``boundary.y_max_direction = 1 0 0``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Optional

import numpy as np

from . import potentials as pot
from .lifting import WALL_KEYS, BoundaryData, UnsupportedGeometry
from .mac import Grid, GridError
from .profiles import Profile, ProfileError


class ParseError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class ValidationError(ValueError):
    def __init__(self, key: str, constraint: str):
        super().__init__(f"{key}: {constraint}")
        self.key = key
        self.constraint = constraint


# --------------------------------------------------------------------------
# sections


@dataclass
class DomainConfig:
    L: tuple = (1.0, 1.0, 1.0)
    periodic: tuple = (True, True, True)


@dataclass
class GridConfig:
    n: tuple = (32, 32, 1)


@dataclass
class TimeConfig:
    dt: float = 0.01
    t_end: float = 1.0
    output_interval: float = 0.1
    smoke_t_end: float = 0.05
    cfl_max: float = 0.5


@dataclass
class PhysicsConfig:
    mu: float = 0.1
    gamma: float = 0.1
    eta: float = 1.0
    decoupled: bool = False


@dataclass
class PotentialConfig:
    kind: str = "quadratic"
    epsilon: float = 0.0
    params: dict = field(default_factory=dict)


@dataclass
class LiftingConfig:
    delta: float = 0.1
    auto: bool = False
    samples: int = 100


@dataclass
class ChecksConfig:
    tol: float = 1e-6
    edi: bool = True
    yield_bound: bool = True
    varin: bool = False
    varin_random: int = 20
    mollifier_width: float = 0.05
    seed: int = 0


@dataclass
class OracleSection:
    max_wavenumber: int = 2
    h: float = 1e-3
    t_end: float = 1.0
    output_every: int = 10
    planar: bool = False


@dataclass
class SweepConfig:
    epsilons: tuple = (0.1, 0.01, 0.001)


@dataclass
class ProxTableConfig:
    radii: tuple = (0.5, 2.0, 4.0)


@dataclass
class OutputConfig:
    snapshots: bool = True
    snapshot_every: int = 1


PROFILE_SLOTS = ("initial.velocity", "initial.stress", "forcing.f0", "forcing.f1") + tuple(
    f"boundary.{w}" for w in WALL_KEYS
)

_SECTIONS = {
    "domain": DomainConfig,
    "grid": GridConfig,
    "time": TimeConfig,
    "physics": PhysicsConfig,
    "lifting": LiftingConfig,
    "checks": ChecksConfig,
    "oracle": OracleSection,
    "sweep": SweepConfig,
    "prox_table": ProxTableConfig,
    "output": OutputConfig,
}

# key -> (value kind, constraint). kinds: f, i, b, s, f3, i3, b3, fl (float list)
_TYPES = {
    "domain.L": "f3", "domain.periodic": "b3", "grid.n": "i3",
    "time.dt": "f", "time.t_end": "f", "time.output_interval": "f", "time.smoke_t_end": "f", "time.cfl_max": "f",
    "physics.mu": "f", "physics.gamma": "f", "physics.eta": "f", "physics.decoupled": "b",
    "lifting.delta": "f", "lifting.auto": "b", "lifting.samples": "i",
    "checks.tol": "f", "checks.edi": "b", "checks.yield_bound": "b", "checks.varin": "b",
    "checks.varin_random": "i", "checks.mollifier_width": "f", "checks.seed": "i",
    "oracle.max_wavenumber": "i", "oracle.h": "f", "oracle.t_end": "f", "oracle.output_every": "i",
    "oracle.planar": "b",
    "sweep.epsilons": "fl", "prox_table.radii": "fl",
    "output.snapshots": "b", "output.snapshot_every": "i",
}

_POSITIVE = {"time.dt", "time.output_interval", "time.smoke_t_end", "time.cfl_max", "physics.mu", "physics.gamma",
             "lifting.delta", "checks.tol", "checks.mollifier_width", "oracle.h"}
_NONNEG = {"time.t_end", "physics.eta", "oracle.t_end", "checks.varin_random", "checks.seed"}
_AT_LEAST_ONE = {"lifting.samples", "oracle.max_wavenumber", "oracle.output_every", "output.snapshot_every"}

_POTENTIAL_PARAMS = {
    "quadratic": {"a": "f"},
    "yield_ball": {"a": "f", "sigma_yield": "f"},
    "radial": {"breaks": "fl", "slopes": "fl", "curvatures": "fl", "cap": "f?"},
    "polydet": {"a2": "f", "a4": "f", "a6": "f", "b": "f"},
}
_POTENTIAL_CLASSES = {"quadratic": pot.Quadratic, "yield_ball": pot.YieldBall, "radial": pot.Radial,
                      "polydet": pot.PolyDet}

_PROFILE_PARAMS = {
    "amplitude": "f", "k": "i3", "parity": "s", "direction": "f3", "component": "i", "center": "f3",
    "width": "f", "time": "s", "omega": "f", "rate": "f",
}


# --------------------------------------------------------------------------
# value conversion


def _split(text: str) -> list:
    return [t for t in text.replace(",", " ").split() if t]


def _convert(key: str, kind: str, text: str):
    try:
        if kind == "f?":
            return None if text.strip().lower() == "none" else _convert(key, "f", text)
        if kind == "f":
            v = float(text)
            if not math.isfinite(v):
                raise ValidationError(key, "must be finite")
            return v
        if kind == "i":
            return int(text)
        if kind == "s":
            return text.strip()
        if kind == "b":
            t = text.strip().lower()
            if t not in ("true", "false"):
                raise ValidationError(key, "must be true or false")
            return t == "true"
        if kind in ("f3", "i3", "b3"):
            parts = _split(text)
            if len(parts) != 3:
                raise ValidationError(key, "needs three values")
            return tuple(_convert(key, kind[0], p) for p in parts)
        if kind == "fl":
            return tuple(_convert(key, "f", p) for p in _split(text))
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(key, {"f": "must be a number", "i": "must be an integer"}.get(kind[0], "bad value")) from None
    raise AssertionError(kind)


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return " ".join(_format(v) for v in value)
    return str(value)


# --------------------------------------------------------------------------
# the config


@dataclass
class SimConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    lifting: LiftingConfig = field(default_factory=LiftingConfig)
    checks: ChecksConfig = field(default_factory=ChecksConfig)
    oracle: OracleSection = field(default_factory=OracleSection)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    prox_table: ProxTableConfig = field(default_factory=ProxTableConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    profiles: dict = field(default_factory=dict)
    initial_snapshot: Optional[str] = None

    # builders -------------------------------------------------------------

    def build_grid(self) -> Grid:
        return Grid(self.grid.n, self.domain.L, self.domain.periodic)

    def build_potential(self) -> pot.PotentialSpec:
        return _POTENTIAL_CLASSES[self.potential.kind](**self.potential.params)

    def build_physics(self, epsilon: float | None = None):
        from .solver import Physics

        eps = self.potential.epsilon if epsilon is None else epsilon
        p = self.physics
        return Physics(p.mu, p.gamma, p.eta, self.build_potential(), eps, p.decoupled)

    def build_boundary(self) -> BoundaryData:
        walls = {}
        for slot, prof in self.profiles.items():
            if slot.startswith("boundary."):
                walls[WALL_KEYS[slot.split(".", 1)[1]]] = prof
        return BoundaryData(walls)

    def _field(self, slot: str, how: str, box=None, periodic=None) -> Optional[Callable]:
        prof = self.profiles.get(slot)
        if prof is None:
            return None
        L = self.domain.L if box is None else box
        per = self.domain.periodic if periodic is None else periodic
        if how == "vector":
            return lambda t, x: prof.vector(t, x, L, per)
        if how == "tensor":
            return lambda t, x: prof.tensor(t, x, L, per)
        return lambda t, x: prof.matrix(t, x, L, per)

    def build_forcing(self, box=None, periodic=None):
        from .solver import Forcing

        return Forcing(self._field("forcing.f0", "vector", box, periodic),
                       self._field("forcing.f1", "matrix", box, periodic))

    def initial_fields(self, box=None, periodic=None):
        """``(velocity(x), stress(x))`` callables, ``None`` for zero data."""
        v = self._field("initial.velocity", "vector", box, periodic)
        s = self._field("initial.stress", "tensor", box, periodic)
        return (None if v is None else (lambda x: v(0.0, x))), (None if s is None else (lambda x: s(0.0, x)))

    def lifting_delta(self) -> float:
        if not self.lifting.auto:
            return self.lifting.delta
        from .lifting import smallness_threshold

        bd = self.build_boundary()
        if not bd.walls:
            return self.lifting.delta
        return smallness_threshold(self.build_grid(), bd, self.physics.mu, self.lifting.samples,
                                   self.checks.seed, delta_max=self.lifting.delta)

    def build_solver(self, epsilon: float | None = None):
        from .solver import MacSolver

        return MacSolver(
            self.build_grid(), self.build_physics(epsilon), self.time.dt, self.build_forcing(),
            self.build_boundary(), self.lifting_delta(), self.time.cfl_max,
        )

    def build_oracle(self):
        """Oracle config on the ``2 pi`` torus with the same physics and data."""
        from .galerkin import OracleConfig

        box, per = (2 * np.pi,) * 3, (True, True, True)
        f = self.build_forcing(box, per)
        o = self.oracle
        return OracleConfig(
            max_wavenumber=o.max_wavenumber, mu=self.physics.mu, gamma=self.physics.gamma,
            eta=0.0 if self.physics.decoupled else self.physics.eta, potential=self.build_potential(),
            epsilon=self.potential.epsilon, h=o.h, t_end=o.t_end, output_every=o.output_every,
            planar=o.planar, f0=f.f0, f1=f.f1,
        )

    def with_overrides(self, **kw) -> "SimConfig":
        return replace(self, **kw)


# --------------------------------------------------------------------------
# parsing


def _lines(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(no, "expected 'section.key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key.count(".") != 1 or not all(key.split(".")):
            raise ParseError(no, f"key '{key}' must have the form section.key")
        if value == "":
            raise ParseError(no, f"key '{key}' has no value")
        yield no, key, value


def _profile_key(key: str):
    """Split ``slot`` / ``slot_param`` keys, or return ``None``."""
    for slot in PROFILE_SLOTS:
        if key == slot:
            return slot, None
        if key.startswith(slot + "_"):
            return slot, key[len(slot) + 1 :]
    return None


def parse_config(text: str) -> SimConfig:
    seen = set()
    sections = {name: {} for name in _SECTIONS}
    pot_kind, pot_eps, pot_params = "quadratic", 0.0, {}
    prof_kind, prof_params = {}, {}
    snapshot = None
    for no, key, value in _lines(text):
        if key in seen:
            raise ParseError(no, f"duplicate key '{key}'")
        seen.add(key)
        sec, name = key.split(".")
        if key in _TYPES:
            sections[sec][name] = _convert(key, _TYPES[key], value)
        elif key == "potential.kind":
            pot_kind = value
        elif key == "potential.epsilon":
            pot_eps = _convert(key, "f", value)
        elif sec == "potential":
            pot_params[name] = (key, value)
        elif key == "initial.snapshot":
            snapshot = value
        elif (pk := _profile_key(key)) is not None:
            slot, param = pk
            if param is None:
                prof_kind[slot] = value
            elif param in _PROFILE_PARAMS:
                prof_params.setdefault(slot, {})[param] = _convert(key, _PROFILE_PARAMS[param], value)
            else:
                raise ValidationError(key, "unknown profile parameter")
        else:
            raise ValidationError(key, "unknown key")

    cfg = SimConfig(**{name: cls(**sections[name]) for name, cls in _SECTIONS.items()})
    cfg.initial_snapshot = snapshot

    # potential
    if pot_kind not in _POTENTIAL_PARAMS:
        raise ValidationError("potential.kind", f"must be one of {', '.join(_POTENTIAL_PARAMS)}")
    allowed = _POTENTIAL_PARAMS[pot_kind]
    params = {}
    for name, (key, value) in pot_params.items():
        if name not in allowed:
            raise ValidationError(key, f"not a parameter of potential kind {pot_kind}")
        params[name] = _convert(key, allowed[name], value)
    try:
        spec = _POTENTIAL_CLASSES[pot_kind](**params)
    except pot.InvalidPotential as exc:
        raise ValidationError(f"potential.{exc.key}", exc.constraint) from None
    cfg.potential = PotentialConfig(pot_kind, pot_eps, asdict(spec))

    # profiles
    for slot in set(prof_params) - set(prof_kind):
        raise ValidationError(slot, "profile parameters given without a profile kind")
    for slot, kind in prof_kind.items():
        try:
            cfg.profiles[slot] = Profile(kind=kind, **prof_params.get(slot, {}))
        except ProfileError as exc:
            raise ValidationError(f"{slot}_{exc.key}" if exc.key != "kind" else slot, exc.constraint) from None
    validate(cfg)
    return cfg


def validate(cfg: SimConfig) -> None:
    for sec in _SECTIONS:
        obj = getattr(cfg, sec)
        for f in fields(obj):
            key = f"{sec}.{f.name}"
            v = getattr(obj, f.name)
            vals = v if isinstance(v, tuple) else (v,)
            if key in _POSITIVE and not all(x > 0 for x in vals):
                raise ValidationError(key, "must be > 0")
            if key in _NONNEG and not all(x >= 0 for x in vals):
                raise ValidationError(key, "must be >= 0")
            if key in _AT_LEAST_ONE and not all(x >= 1 for x in vals):
                raise ValidationError(key, "must be >= 1")
    if not all(x > 0 for x in cfg.domain.L):
        raise ValidationError("domain.L", "must be > 0")
    if not 0 <= cfg.potential.epsilon <= 1:
        raise ValidationError("potential.epsilon", "must be in [0, 1]")
    if not all(0 < e <= 1 for e in cfg.sweep.epsilons) or not cfg.sweep.epsilons:
        raise ValidationError("sweep.epsilons", "needs one or more values in (0, 1]")
    if not all(r >= 0 for r in cfg.prox_table.radii):
        raise ValidationError("prox_table.radii", "must be >= 0")
    if cfg.time.output_interval < cfg.time.dt * (1 - 1e-12):
        raise ValidationError("time.output_interval", "must be >= time.dt")
    nsteps = cfg.oracle.t_end / cfg.oracle.h
    if abs(nsteps - round(nsteps)) > 1e-9 * max(1.0, nsteps):
        raise ValidationError("oracle.t_end", "must be a multiple of oracle.h")
    try:
        grid = cfg.build_grid()
    except GridError as exc:
        raise ValidationError("grid.n", str(exc)) from None
    walled = [cfg.domain.L[b] for b in range(3) if not cfg.domain.periodic[b]]
    if walled and not cfg.lifting.delta < 0.5 * min(walled):
        raise ValidationError("lifting.delta", "must be below half the smallest walled box width")
    stress = cfg.profiles.get("initial.stress")
    if stress is not None and stress.kind == "taylor_green":
        raise ValidationError("initial.stress", "taylor_green is a velocity profile")
    f1 = cfg.profiles.get("forcing.f1")
    if f1 is not None and f1.kind == "taylor_green":
        raise ValidationError("forcing.f1", "taylor_green is a velocity profile")
    try:
        cfg.build_boundary().validate(grid)
    except (ProfileError, UnsupportedGeometry) as exc:
        key = getattr(exc, "key", None) or next(
            (s for s in cfg.profiles if s.startswith("boundary.")), "boundary")
        raise ValidationError(key, getattr(exc, "constraint", str(exc))) from None


def load_config(path) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: SimConfig) -> str:
    out = []
    for sec in ("domain", "grid", "time", "physics"):
        for f in fields(getattr(cfg, sec)):
            out.append(f"{sec}.{f.name} = {_format(getattr(getattr(cfg, sec), f.name))}")
    out.append(f"potential.kind = {cfg.potential.kind}")
    out.append(f"potential.epsilon = {_format(cfg.potential.epsilon)}")
    for k, v in cfg.potential.params.items():
        out.append(f"potential.{k} = {_format(v)}")
    for sec in ("lifting", "checks", "oracle", "sweep", "prox_table", "output"):
        for f in fields(getattr(cfg, sec)):
            out.append(f"{sec}.{f.name} = {_format(getattr(getattr(cfg, sec), f.name))}")
    if cfg.initial_snapshot is not None:
        out.append(f"initial.snapshot = {cfg.initial_snapshot}")
    for slot in PROFILE_SLOTS:
        prof = cfg.profiles.get(slot)
        if prof is None:
            continue
        out.append(f"{slot} = {prof.kind}")
        for name in _PROFILE_PARAMS:
            out.append(f"{slot}_{name} = {_format(getattr(prof, name))}")
    return "\n".join(out) + "\n"
