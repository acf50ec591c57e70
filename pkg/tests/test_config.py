from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vpflow import potentials as pot
from vpflow.config import ParseError, SimConfig, ValidationError, load_config, parse_config, serialize_config

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.cfg"))


def test_defaults_parse_from_empty_text():
    cfg = parse_config("# nothing\n\n")
    assert cfg.grid.n == (32, 32, 1) and cfg.potential.kind == "quadratic"
    assert isinstance(cfg.build_potential(), pot.Quadratic)


@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_shipped_configs_parse_and_roundtrip(path):
    cfg = load_config(path)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    cfg.build_grid()
    cfg.build_physics()


def test_expected_shipped_configs_present():
    names = {p.stem for p in CONFIGS}
    assert {"zero_data", "taylor_green", "lid_cavity", "long_horizon", "oracle"} <= names


@pytest.mark.parametrize(
    "text, key, fragment",
    [
        ("physics.mu = -1", "physics.mu", "> 0"),
        ("physics.mu = abc", "physics.mu", "number"),
        ("grid.n = 8 8", "grid.n", "three"),
        ("grid.n = 2 8 1", "grid.n", "at least 4"),
        ("time.dt = 0.1\ntime.output_interval = 0.01", "time.output_interval", ">= time.dt"),
        ("potential.epsilon = 2", "potential.epsilon", "[0, 1]"),
        ("potential.kind = polydet\npotential.b = 5", "potential.b", "4"),
        ("potential.kind = yield_ball\npotential.sigma_yield = 0", "potential.sigma_yield", ""),
        ("potential.kind = quadratic\npotential.sigma_yield = 1", "potential.sigma_yield", "not a parameter"),
        ("potential.kind = banana", "potential.kind", "one of"),
        ("bogus.key = 1", "bogus.key", "unknown key"),
        ("physics.decoupled = maybe", "physics.decoupled", "true or false"),
        ("initial.velocity_amplitude = 1", "initial.velocity", "without a profile kind"),
        ("initial.velocity = spiral", "initial.velocity", "one of"),
        ("initial.velocity = constant\ninitial.velocity_wobble = 1", "initial.velocity_wobble", "unknown profile"),
        ("domain.periodic = true false true\nlifting.delta = 0.6", "lifting.delta", "half"),
        ("boundary.y_max = lid_tangential", "boundary.y_max", "periodic"),
        ("domain.periodic = true false true\nboundary.y_max = lid_tangential\nboundary.y_max_direction = 0 1 0",
         "boundary.y_max_direction", "tangential"),
        ("oracle.h = 0.003\noracle.t_end = 1", "oracle.t_end", "multiple"),
        ("sweep.epsilons = 0.1 0", "sweep.epsilons", "(0, 1]"),
    ],
)
def test_validation_errors_name_the_key(text, key, fragment):
    with pytest.raises(ValidationError) as ei:
        parse_config(text)
    assert ei.value.key == key
    assert fragment in ei.value.constraint
    assert str(ei.value).startswith(key + ":")


@pytest.mark.parametrize(
    "text, line",
    [("grid.n 8 8 1", 1), ("# c\nphysics = 1", 2), ("a.b.c = 1", 1), ("physics.mu =", 1),
     ("physics.mu = 1\nphysics.mu = 2", 2)],
)
def test_parse_errors_report_line(text, line):
    with pytest.raises(ParseError) as ei:
        parse_config(text)
    assert ei.value.line == line and str(ei.value).startswith(f"line {line}:")


def test_profiles_and_comments():
    cfg = parse_config(
        "initial.velocity = taylor_green   # comment\n"
        "initial.velocity_amplitude = 0.5\n"
        "initial.velocity_k = 1, 1, 0\n"
        "forcing.f0 = gaussian_bump\nforcing.f0_time = decaying\nforcing.f0_rate = 0.1\n"
    )
    v = cfg.profiles["initial.velocity"]
    assert v.kind == "taylor_green" and v.amplitude == 0.5 and v.k == (1, 1, 0)
    assert cfg.profiles["forcing.f0"].rate == 0.1
    fo = cfg.build_forcing()
    assert fo.f0 is not None and fo.f1 is None


def test_radial_cap_none_roundtrips():
    cfg = parse_config("potential.kind = radial\npotential.breaks = 0 1\npotential.slopes = 0 1\n"
                       "potential.curvatures = 1 0\npotential.cap = none\n")
    assert cfg.potential.params["cap"] is None
    assert parse_config(serialize_config(cfg)) == cfg


@given(
    mu=st.floats(1e-4, 10), eps=st.floats(0, 1), n=st.integers(4, 64),
    periodic=st.tuples(st.booleans(), st.booleans()),
)
def test_serialize_roundtrip_property(mu, eps, n, periodic):
    text = (f"physics.mu = {mu!r}\npotential.epsilon = {eps!r}\ngrid.n = {n} {n + 1} 1\n"
            f"domain.periodic = {str(periodic[0]).lower()} {str(periodic[1]).lower()} true\n"
            "lifting.delta = 0.1\n")
    cfg = parse_config(text)
    assert parse_config(serialize_config(cfg)) == cfg


def test_with_overrides_is_a_copy():
    cfg = SimConfig()
    other = cfg.with_overrides(initial_snapshot="x.bin")
    assert cfg.initial_snapshot is None and other.initial_snapshot == "x.bin"
