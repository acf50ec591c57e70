import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vpflow.config import load_config
from vpflow.solver import run

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


CONFIGS = Path(__file__).parent.parent / "configs"


def cavity_solver(eps):
    """Lid-driven yield-ball box from the shipped config, at smoothing ``eps``."""
    return load_config(CONFIGS / "lid_cavity.cfg").build_solver(epsilon=eps)


_CAVITY = {}
CAVITY_SECONDS = {}


@pytest.fixture(scope="session")
def cavity_runs():
    """Lid-driven yield-ball box, 32^2, T = 1, output every step, eps in {1e-2, 0}."""
    if not _CAVITY:
        for eps in (1e-2, 0.0):
            t0 = time.perf_counter()
            sol = cavity_solver(eps)
            _CAVITY[eps] = run(sol, sol.initial_state(None, None), 1.0, 0.01)
            CAVITY_SECONDS[eps] = time.perf_counter() - t0
    return _CAVITY
