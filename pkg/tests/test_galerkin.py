import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vpflow import potentials as pot
from vpflow import tensor as T
from vpflow.galerkin import (
    VOLUME,
    BlowUp,
    GalerkinOracle,
    OracleConfig,
    apriori_bound,
    build_bases,
    energy_report,
)
from vpflow.ledger import check_edi


def smooth_v(x):
    return np.stack([np.sin(x[:, 1]) + 0.3 * np.cos(2 * x[:, 2]), np.sin(x[:, 2]), np.sin(x[:, 0]) * 0.7], 1)


def smooth_s(x):
    return np.stack([0.5 * np.cos(x[:, 0] + x[:, 1]), 0.4 * np.sin(2 * x[:, 2]), 0.3 * np.cos(x[:, 1]),
                     0.2 * np.sin(x[:, 0] - x[:, 1]), 0.1 + 0 * x[:, 0]], 1)


@pytest.fixture(scope="module")
def basis1():
    return build_bases(1)


def test_mode_count_by_enumeration(basis1):
    reps = set()
    for k in itertools.product(range(-1, 2), repeat=3):
        if any(k):
            reps.add(max(k, tuple(-c for c in k)))
    assert len(reps) == 13 == len(basis1.kvecs)
    assert {tuple(k) for k in basis1.kvecs} == reps
    assert basis1.n_velocity == 13 * 2 * 2
    assert basis1.n_tensor == 5 + 13 * 2 * 5


def test_velocity_modes_divergence_free_and_orthonormal(basis1):
    b = basis1
    k = np.concatenate([b.kvecs, b.kvecs])
    assert np.abs(np.einsum("rj,rpj->rp", k, b.pol)).max() < 1e-14
    # Gram matrix of the cartesian velocity modes by quadrature
    n = b.n_velocity
    modes = np.stack([b.velocity(np.eye(n)[i].reshape(-1, 2)) for i in range(n)])
    gram = b.weight * np.einsum("iqj,kqj->ik", modes, modes)
    np.testing.assert_allclose(gram, np.eye(n), atol=1e-12)


def test_tensor_modes_orthonormal(basis1):
    b = basis1
    n = b.n_tensor
    modes = []
    for i in range(n):
        e = np.eye(n)[i]
        modes.append(b.stress(e[:5], e[5:].reshape(-1, 5)))
    modes = np.stack(modes)
    gram = b.weight * np.einsum("iqa,kqa->ik", modes, modes)
    np.testing.assert_allclose(gram, np.eye(n), atol=1e-12)


def test_zero_state_is_equilibrium():
    o = GalerkinOracle(OracleConfig(max_wavenumber=1))
    y = np.zeros(o.basis.n_velocity + o.basis.n_tensor)
    np.testing.assert_array_equal(o.rhs(0.0, y), 0)
    cfg = OracleConfig(max_wavenumber=1, h=0.05, t_end=0.2)
    tr = GalerkinOracle(cfg).integrate(y)
    np.testing.assert_array_equal(tr.states, 0)
    led = energy_report(tr)
    assert np.all(led.column("residual_total") == 0)


@pytest.mark.parametrize("r", [0, 5, 20])
def test_single_velocity_mode_decay_rate(r):
    cfg = OracleConfig(max_wavenumber=2, mu=0.3, eta=0.0)
    o = GalerkinOracle(cfg)
    b = o.basis
    alpha = np.zeros((b.n_harm, 2))
    alpha[r, 1] = 0.8
    y = b.join(alpha, np.zeros(5), np.zeros((b.n_harm, 5)))
    da, _, _ = b.split(o.rhs(0.0, y))
    expect = np.zeros_like(alpha)
    expect[r, 1] = -0.3 * b.k2[r] * 0.8
    np.testing.assert_allclose(da, expect, atol=1e-13)


def test_mean_tensor_mode_relaxation():
    a, eps = 2.0, 0.01
    o = GalerkinOracle(OracleConfig(max_wavenumber=1, potential=pot.Quadratic(a), epsilon=eps))
    b = o.basis
    beta0 = np.array([0.0, 0.7, 0.0, 0.0, 0.0])
    y = b.join(np.zeros((b.n_harm, 2)), beta0, np.zeros((b.n_harm, 5)))
    _, db0, db = b.split(o.rhs(0.0, y))
    np.testing.assert_allclose(db0, -(a / (1 + eps * a)) * beta0, rtol=1e-13)
    assert np.abs(db).max() < 1e-13


def test_rejects_nonsmooth_potential():
    with pytest.raises(ValueError):
        OracleConfig(epsilon=0.0)


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_convection_skew_and_jaumann_neutral(seed):
    rng = np.random.default_rng(seed)
    o = GalerkinOracle(OracleConfig(max_wavenumber=2, eta=0.7))
    b = o.basis
    y = rng.normal(size=b.n_velocity + b.n_tensor)
    tm = o.terms(0.0, y)
    alpha, beta0, beta = b.split(y)
    scale = float(np.sum(y**2)) ** 1.5
    assert abs(np.sum(tm["convection"] * alpha)) <= 1e-12 * scale
    rot = tm["rotation"]
    assert abs(rot[0] @ beta0 + np.sum(rot[1] * beta)) <= 1e-12 * scale
    adv = tm["advection_s"]
    assert abs(adv[0] @ beta0 + np.sum(adv[1] * beta)) <= 1e-12 * scale
    # the two coupling terms cancel in the total balance
    cv = np.sum(tm["coupling_v"] * alpha)
    cs = tm["coupling_s"][0] @ beta0 + np.sum(tm["coupling_s"][1] * beta)
    assert abs(cv + cs) <= 1e-12 * (1 + float(np.sum(y**2)))


def test_parseval(rng):
    b = build_bases(2)
    y = rng.normal(size=b.n_velocity + b.n_tensor)
    alpha, beta0, beta = b.split(y)
    v = b.velocity(alpha)
    s = b.stress(beta0, beta)
    assert b.weight * np.sum(v**2) == pytest.approx(np.sum(alpha**2), rel=1e-10)
    assert b.weight * np.sum(s**2) == pytest.approx(beta0 @ beta0 + np.sum(beta**2), rel=1e-10)
    # pointwise evaluation agrees with the quadrature tables
    np.testing.assert_allclose(b.velocity_at(alpha, b.points[:50]), v[:50], atol=1e-12)
    np.testing.assert_allclose(b.stress_at(beta0, beta, b.points[:50]), s[:50], atol=1e-12)


def test_projection_reproduces_basis_fields(rng):
    b = build_bases(2)
    y = rng.normal(size=b.n_velocity + b.n_tensor)
    alpha, beta0, beta = b.split(y)
    o = GalerkinOracle(OracleConfig(max_wavenumber=2))
    y2 = o.project_initial(lambda x: b.velocity_at(alpha, x), lambda x: b.stress_at(beta0, beta, x))
    np.testing.assert_allclose(y2, y, atol=1e-12)


def test_viscous_decay_exact():
    mu = 0.2
    cfg = OracleConfig(max_wavenumber=2, mu=mu, eta=0.0, h=1e-3, t_end=1.0, output_every=1000)
    o = GalerkinOracle(cfg)
    b = o.basis
    alpha = np.zeros((b.n_harm, 2))
    r = 7
    alpha[r, 0] = 1.5
    y0 = b.join(alpha, np.zeros(5), np.zeros((b.n_harm, 5)))
    tr = o.integrate(y0)
    a1 = tr.split(-1)[0][r, 0]
    assert abs(a1 / (1.5 * np.exp(-mu * b.k2[r])) - 1) <= 1e-8
    led = energy_report(GalerkinOracle(replace_every(cfg, 1)).integrate(y0))
    k = led.column("kinetic") + led.column("viscous_dissipation")
    assert np.abs(k / k[0] - 1).max() <= 1e-6


def replace_every(cfg, n):
    from dataclasses import replace

    return replace(cfg, output_every=n)


def test_single_mode_kinetic_energy_is_half_square():
    b = build_bases(1)
    alpha = np.zeros((b.n_harm, 2))
    alpha[3, 0] = 0.6
    o = GalerkinOracle(OracleConfig(max_wavenumber=1))
    r = o.rates(0.0, b.join(alpha, np.zeros(5), np.zeros((b.n_harm, 5))))
    assert r["kinetic"] == pytest.approx(0.18, rel=1e-14)
    assert b.weight * np.sum(b.velocity(alpha) ** 2) / 2 == pytest.approx(0.18, rel=1e-12)
    assert VOLUME == pytest.approx((2 * np.pi) ** 3)


def test_energy_equalities_and_apriori_bound():
    cfg = OracleConfig(max_wavenumber=2, mu=0.05, gamma=0.05, eta=1.0, potential=pot.Quadratic(1.0),
                       epsilon=1e-2, h=2e-3, t_end=0.2, output_every=1)
    o = GalerkinOracle(cfg)
    tr = o.integrate(o.project_initial(smooth_v, smooth_s))
    rep = check_edi(energy_report(tr), 1e-6, equality=True)
    assert rep.passed, rep.summary()
    ab = apriori_bound(tr)
    assert ab.passed and ab.observed > 0


def test_forcing_work_enters_balance():
    f0 = lambda t, x: np.stack([np.cos(t) * np.sin(x[:, 1]), 0 * x[:, 0], 0 * x[:, 0]], 1)  # noqa: E731
    f1 = lambda t, x: T.to_matrix(np.stack([0 * x[:, 0]] * 3 + [0.2 * np.cos(x[:, 0]), 0 * x[:, 0]], 1))  # noqa: E731
    cfg = OracleConfig(max_wavenumber=1, mu=0.1, gamma=0.1, h=2e-3, t_end=0.2, f0=f0, f1=f1)
    o = GalerkinOracle(cfg)
    tr = o.integrate(o.project_initial(smooth_v, smooth_s))
    led = energy_report(tr)
    assert abs(led[-1].work_f0) > 1e-3 and abs(led[-1].work_f1) > 1e-4
    assert check_edi(led, 1e-6, equality=True).passed


def test_blowup_detected():
    cfg = OracleConfig(max_wavenumber=1, mu=0.01, h=0.5, t_end=50.0, potential=pot.Quadratic(1.0), epsilon=1e-3)
    o = GalerkinOracle(cfg)
    y0 = 50 * o.project_initial(smooth_v, smooth_s)
    with pytest.raises(BlowUp):
        o.integrate(y0)
