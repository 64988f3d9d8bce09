import math

import numpy as np
import pytest
from scipy.stats import norm

from qmq import analytics, engine, metrics, models
from qmq.errors import DomainError, FitDomainError, UndefinedConditionalError
from qmq.linalg import HBAR, projector


def binomial_pmf(n, p):
    return np.array([math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n + 1)])


def charge_model(t, eps=10.0):
    return models.charge_readout_model(models.ChargeQubitParams(eps, t, 5.0, 0.5))


def test_point_infidelity_matches_binomial_oracle():
    m = charge_model(0.0)
    step = engine.step_operators(m.hamiltonian, m.delta_tau)
    n = 60
    ch = engine.evolve_count_resolved(step, n)
    p_e = binomial_pmf(n, math.sin(5.0 * m.delta_tau / HBAR) ** 2)
    p_g = binomial_pmf(n, math.sin(4.5 * m.delta_tau / HBAR) ** 2)
    rule = engine.critical_ratio(p_e, p_g)
    yg, ye = engine.aggregate_operations(ch, rule)
    mask = rule.e_mask()
    oracle = 1 - 0.5 * (p_e[mask].sum() + p_g[~mask].sum())
    assert math.isclose(metrics.infidelity(ye, yg, m.state_e, m.state_g), oracle, rel_tol=1e-10)


def test_series_matches_point_metric():
    m = charge_model(0.5)
    series = metrics.conditional_series(m, [25, 80])
    step = engine.step_operators(m.hamiltonian, m.delta_tau)
    ch = engine.evolve_count_resolved(step, 80)
    p_e = engine.outcome_distribution(ch, projector(m.state_e))
    p_g = engine.outcome_distribution(ch, projector(m.state_g))
    yg, ye = engine.aggregate_operations(ch, engine.critical_ratio(p_e, p_g))
    assert math.isclose(series.infidelity[1], metrics.infidelity(ye, yg, m.state_e, m.state_g), rel_tol=1e-10)


def test_zero_tunneling_infidelity_gaussian_limit():
    m = charge_model(0.0)
    n_values = [200, 500, 1000, 2000]
    series = metrics.conditional_series(m, n_values)
    gm = analytics.measurement_rate(0.5, m.delta_tau).value
    ref = 1 - norm.cdf(np.sqrt(2 * gm * series.integration_times))
    assert np.max(np.abs(series.infidelity - ref)) < 2e-3
    assert np.all(np.diff(series.infidelity) < 0)
    np.testing.assert_allclose(series.k_critical, 0.5, atol=1e-9)


def test_mixedness_and_post_measurement_state():
    m = charge_model(0.0)
    rho = np.eye(2) / 2
    series = metrics.conditional_series(m, [10, 100, 1000], rho_pre=rho)
    mix_e = series.mixedness_by_outcome["e"]
    assert np.all((mix_e >= 0) & (mix_e <= 0.5)) and np.all(np.diff(mix_e) < 0)
    step = engine.step_operators(m.hamiltonian, m.delta_tau)
    post = metrics.post_measurement_state(step.upsilon1, rho)
    assert math.isclose(np.trace(post).real, 1.0)
    assert math.isclose(metrics.mixedness(step.upsilon1, projector([1, 0])), 0.0, abs_tol=1e-12)
    with pytest.raises(UndefinedConditionalError):
        metrics.post_measurement_state(np.zeros((4, 4)), rho)


def test_leakage_metric():
    p = np.diag([0.0, 1.0, 1.0])
    eye = np.eye(9)
    rho = projector([1, 0, 0])
    assert metrics.leakage(eye, 0 * eye, rho, p) == 0.0
    rho_mix = np.diag([0.5, 0.25, 0.25])
    assert math.isclose(metrics.leakage(0.5 * eye, 0.5 * eye, rho_mix, p), 0.5)
    with pytest.raises(DomainError):
        metrics.leakage(eye, eye, rho, np.diag([0.5, 1, 1]))


def test_fit_decay_rate_recovers_rate():
    t = np.linspace(0, 100, 200)
    fit = metrics.fit_decay_rate(t, np.exp(-0.037 * t))
    assert math.isclose(fit.rate, 0.037, rel_tol=1e-10)
    # start-up transient outside the window does not bias the fit
    y = np.exp(-0.02 * t) * (1 + 0.3 * np.exp(-2.0 * t))
    assert math.isclose(metrics.fit_decay_rate(t, y).rate, 0.02, rel_tol=1e-3)


def test_fit_decay_rate_errors():
    with pytest.raises(FitDomainError):
        metrics.fit_decay_rate([1, 2, 3], [1, 1, 1])
    with pytest.raises(FitDomainError):
        metrics.fit_decay_rate(np.arange(6), [1, 0.5, -0.1, 0.1, 0.1, 0.1])


def test_fit_measurement_rate_recovers_rate():
    t = np.geomspace(1, 200, 30)
    f = 1 - norm.cdf(np.sqrt(2 * 0.0314 * t))
    fit = metrics.fit_measurement_rate(t, f)
    assert math.isclose(fit.rate, 0.0314, rel_tol=1e-8)
    with pytest.raises(FitDomainError):
        metrics.fit_measurement_rate(t, np.full_like(t, 0.5))
    with pytest.raises(FitDomainError):
        metrics.fit_measurement_rate(t, np.full_like(t, 0.7))


def test_interior_minimum():
    t = np.geomspace(1, 1000, 31)
    v = (np.log(t) - math.log(40.0)) ** 2 + 0.1
    loc, val = metrics.interior_minimum(t, v)
    assert math.isclose(loc, 40.0, rel_tol=1e-9) and math.isclose(val, 0.1, rel_tol=1e-9)
    assert metrics.interior_minimum(t, -t) is None


def test_relaxation_fit_matches_rate_law():
    m = charge_model(0.5)
    guess = analytics.relaxation_rate_charge(0.5, 0.5, 10.0, m.delta_tau).value
    fit = metrics.fit_relaxation(m, guess)
    assert abs(fit.rate / guess - 1) < 0.1
    with pytest.raises(DomainError):
        metrics.fit_relaxation(m, 0.0)


def test_leakage_series_requires_projector():
    with pytest.raises(DomainError):
        metrics.leakage_series(charge_model(0.0), np.eye(2) / 2, [10])


def test_streaming_and_full_history_agree():
    m = charge_model(2.0)
    a = metrics.conditional_series(m, [10, 60], np.eye(2) / 2)
    b = metrics.conditional_series(m, [10, 60], np.eye(2) / 2, streaming=False)
    np.testing.assert_allclose(a.infidelity, b.infidelity, atol=1e-13)
    np.testing.assert_allclose(a.mixedness_by_outcome["g"], b.mixedness_by_outcome["g"], atol=1e-12)


def test_record_types_validate():
    with pytest.raises(DomainError):
        metrics.BenchmarkSeries(np.arange(3), np.arange(3.0), np.zeros(2), np.zeros(3))
    with pytest.raises(DomainError):
        metrics.FittedRates(gamma_m=-1.0)


def _spin_leakage(fig3, delta, convention="pauli", n=400):
    p = models.SpinQubitParams(**fig3, delta=delta, zeeman_convention=convention)
    m = models.spin_readout_model(p)
    rho = projector(models.basis_state(models.DD))
    return m, metrics.leakage_series(m, rho, [n])[0]


def test_delta_y_is_equivalent_to_delta_x(fig3):
    _, lx = _spin_leakage(fig3, (0.05, 0.0, 0.0))
    _, ly = _spin_leakage(fig3, (0.0, 0.05, 0.0))
    _, lxy = _spin_leakage(fig3, (0.03, 0.04, 0.0))
    assert ly == pytest.approx(lx, rel=1e-9)
    assert lxy == pytest.approx(lx, rel=1e-9)


def test_leakage_law_needs_pauli_convention(fig3):
    for convention, agrees in (("pauli", True), ("half", False)):
        m, leak = _spin_leakage(fig3, (0.05, 0.0, 0.0), convention)
        rate = analytics.leakage_rate(0.05, fig3["z_r"], m.delta_tau).value
        law = 0.5 * (1 - math.exp(-rate * 400 * m.delta_tau))
        assert bool(abs(leak / law - 1) < 0.01) is agrees
