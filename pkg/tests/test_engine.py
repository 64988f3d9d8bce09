import math

import numpy as np
import pytest

from qmq import engine, models
from qmq.errors import DomainError, ResourceError
from qmq.linalg import HBAR, projector, trace_vector, vec

from .conftest import random_charge_params, random_spin_params


def charge_step(t=0.0, eps=10.0, gamma=5.0, dg=0.5):
    m = models.charge_readout_model(models.ChargeQubitParams(eps, t, gamma, dg))
    return engine.step_operators(m.hamiltonian, m.delta_tau), m


def binomial_pmf(n, p):
    return np.array([math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n + 1)])


def test_step_operators_complete_and_meter_order():
    step, m = charge_step(0.5)
    eye = np.eye(2)
    np.testing.assert_allclose(step.m0.conj().T @ step.m0 + step.m1.conj().T @ step.m1, eye, atol=1e-13)
    # meter as first factor: permute the product basis and compare
    perm = np.array([0, 2, 1, 3])
    h_swapped = m.hamiltonian[np.ix_(perm, perm)]
    other = engine.step_operators(h_swapped, m.delta_tau, meter_last=False)
    np.testing.assert_allclose(other.m0, step.m0, atol=1e-13)
    np.testing.assert_allclose(other.m1, step.m1, atol=1e-13)
    tv = trace_vector(2)
    np.testing.assert_allclose(tv @ step.unconditional, tv, atol=1e-13)


def test_step_operators_reject_bad_input():
    with pytest.raises(DomainError):
        engine.step_operators(np.eye(4), 0.0)
    with pytest.raises(DomainError):
        engine.step_operators(np.eye(3), 0.1)


def test_single_step_transmission_at_zero_tunneling():
    step, m = charge_step(0.0)
    # qubit in L couples the meter with gamma, in R with gamma - delta_gamma
    p_l = math.sin(5.0 * m.delta_tau / HBAR) ** 2
    p_r = math.sin(4.5 * m.delta_tau / HBAR) ** 2
    assert math.isclose(abs(step.m1[0, 0]) ** 2, p_l, rel_tol=1e-12)
    assert math.isclose(abs(step.m1[1, 1]) ** 2, p_r, rel_tol=1e-12)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("n", [1, 5, 9])
def test_recursion_equals_brute_force_charge(seed, n):
    p = random_charge_params(np.random.default_rng(seed))
    m = models.charge_readout_model(p)
    step = engine.step_operators(m.hamiltonian, m.delta_tau)
    fast = engine.evolve_count_resolved(step, n)
    slow = engine.brute_force_channels(step, n)
    np.testing.assert_allclose(fast.channels, slow.channels, atol=1e-12)


@pytest.mark.parametrize("seed", range(2))
def test_recursion_equals_brute_force_spin(seed):
    p = random_spin_params(np.random.default_rng(100 + seed))
    m = models.spin_readout_model(p)
    step = engine.step_operators(m.hamiltonian, m.delta_tau)
    fast = engine.evolve_count_resolved(step, 7)
    slow = engine.brute_force_channels(step, 7)
    np.testing.assert_allclose(fast.channels, slow.channels, atol=1e-12)


def test_zero_tunneling_count_distribution_is_binomial():
    step, m = charge_step(0.0)
    n = 150
    p_l = math.sin(5.0 * m.delta_tau / HBAR) ** 2
    _, x = next(engine.propagate_states(step, projector([1, 0]), [n]))
    probs = engine.probabilities_from_states(x, 2)[:, 0]
    np.testing.assert_allclose(probs, binomial_pmf(n, p_l), atol=1e-13)


def test_channels_sum_to_unconditional_and_preserve_trace():
    step, _ = charge_step(2.0)
    ch = engine.evolve_count_resolved(step, 30)
    np.testing.assert_allclose(ch.total(), engine.unconditional_channel(step, 30), atol=1e-12)
    assert engine.trace_drift(ch) < 1e-12
    assert ch.dim == 2


def test_functionals_match_states():
    step, _ = charge_step(0.5)
    rho = np.array([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, 0.7]])
    n = 40
    _, states = next(engine.propagate_states(step, rho, [n]))
    p_states = engine.probabilities_from_states(states, 2)[:, 0]
    _, fun = next(engine.propagate_functionals(step, trace_vector(2)[None, :], [n]))
    p_fun = np.real(fun[:, 0] @ vec(rho))
    np.testing.assert_allclose(p_fun, p_states, atol=1e-13)
    ch = engine.evolve_count_resolved(step, n)
    np.testing.assert_allclose(engine.outcome_distribution(ch, rho), p_states, atol=1e-13)


def test_checkpoints_are_consistent_with_single_runs():
    step, _ = charge_step(0.5)
    rho = projector([1, 0])
    got = {n: x.copy() for n, x in engine.propagate_states(step, rho, [3, 17, 40])}
    for n in (3, 17, 40):
        _, single = next(engine.propagate_states(step, rho, [n]))
        np.testing.assert_array_equal(got[n], single)


def test_parallel_blocks_are_bitwise_deterministic(monkeypatch):
    monkeypatch.setattr(engine, "ROW_BLOCK", 16)
    step, _ = charge_step(2.0)
    rhos = [projector([1, 0]), projector([0, 1]), np.eye(2) / 2]
    outs = []
    for workers in (1, 4, 8):
        outs.append(next(engine.propagate_states(step, rhos, [120], workers=workers))[1].copy())
    np.testing.assert_array_equal(outs[0], outs[1])
    np.testing.assert_array_equal(outs[0], outs[2])


def test_unconditional_states(rng):
    step, _ = charge_step(2.0)
    rho = projector([1, 0])
    states = engine.unconditional_states(step, rho, [5, 1, 5, 12])
    assert sorted(states) == [1, 5, 12]
    direct = np.linalg.matrix_power(step.unconditional, 12) @ vec(rho)
    np.testing.assert_allclose(vec(states[12]), direct, atol=1e-13)
    assert math.isclose(np.trace(states[12]).real, 1.0, rel_tol=1e-12)


def test_resource_caps(monkeypatch):
    step, _ = charge_step(0.0)
    with pytest.raises(ResourceError):
        next(engine.propagate_states(step, projector([1, 0]), [50], max_n=10))
    with pytest.raises(ResourceError):
        engine.brute_force_channels(step, engine.BRUTE_FORCE_MAX_N + 1)
    monkeypatch.setattr(engine, "MAX_CHANNEL_BYTES", 1000)
    with pytest.raises(ResourceError, match="streaming"):
        engine.evolve_count_resolved(step, 100)
    with pytest.raises(DomainError):
        engine.evolve_count_resolved(step, 0)


def test_memory_estimates():
    assert engine.history_bytes(10, 2) == 3 * 12 * 16 * 16
    assert engine.streaming_bytes(10, 6, 2) == 3 * 12 * 2 * 36 * 16


# --- inference ---------------------------------------------------------------


def test_symmetric_binomials_give_half():
    for n in (200, 201):
        p_e = binomial_pmf(n, 0.6)
        p_g = binomial_pmf(n, 0.4)
        rule = engine.critical_ratio(p_e, p_g)
        assert math.isclose(rule.k_critical, 0.5, abs_tol=1e-9)
        assert rule.monotone


def test_exact_tie_goes_to_g():
    p_e = np.array([0.1, 0.3, 0.6])
    p_g = np.array([0.6, 0.3, 0.1])
    rule = engine.critical_ratio(p_e, p_g)
    assert list(rule.e_mask()) == [False, False, True]
    assert list(rule.infer([0, 1, 2])) == [False, False, True]


def test_split_uses_llr_zero_crossing():
    p_e = np.array([0.1, 0.2, 0.7])
    p_g = np.array([0.5, 0.4, 0.1])
    rule = engine.critical_ratio(p_e, p_g)
    l1, l2 = math.log(0.2 / 0.4), math.log(0.7 / 0.1)
    assert math.isclose(rule.n_split, 1 + (-l1) / (l2 - l1), rel_tol=1e-12)


def test_non_monotone_ratio_warns_and_falls_back():
    p_e = np.array([0.4, 0.1, 0.5])
    p_g = np.array([0.2, 0.6, 0.2])
    with pytest.warns(UserWarning, match="not monotone"):
        rule = engine.critical_ratio(p_e, p_g)
    j, _ = engine.threshold_scan(p_e, p_g)
    assert not rule.monotone and rule.n_split == max(j, 0)


def test_negligible_tail_is_ignored():
    p_e = np.array([1e-30, 0.2, 0.8])
    p_g = np.array([0.0, 0.9, 0.1])
    rule = engine.critical_ratio(p_e, p_g)
    assert rule.monotone and list(rule.e_mask()) == [False, False, True]


def test_no_e_region():
    rule = engine.critical_ratio(np.array([0.6, 0.4]), np.array([0.4, 0.6]) * 2)
    assert not rule.e_mask().any()


def test_threshold_matches_exhaustive_scan():
    step, _ = charge_step(0.5)
    e, g = models.charge_eigenbasis(10.0, 0.5)
    _, x = next(engine.propagate_states(step, [projector(e), projector(g)], [200]))
    probs = engine.probabilities_from_states(x, 2)
    rule = engine.critical_ratio(probs[:, 0], probs[:, 1])
    j, _ = engine.threshold_scan(probs[:, 0], probs[:, 1])
    assert abs(rule.n_split - j) <= 1


def test_aggregate_operations():
    step, _ = charge_step(0.5)
    ch = engine.evolve_count_resolved(step, 20)
    rule = engine.InferenceRule(20, 10.3)
    yg, ye = engine.aggregate_operations(ch, rule)
    np.testing.assert_allclose(yg + ye, ch.total(), atol=1e-13)
    np.testing.assert_allclose(ye, ch.channels[11:].sum(axis=0))
    with pytest.raises(DomainError):
        engine.aggregate_operations(ch, engine.InferenceRule(21, 10))


def test_critical_ratio_shape_check():
    with pytest.raises(DomainError):
        engine.critical_ratio(np.ones(3), np.ones(4))


def test_log_checkpoints():
    pts = engine.log_checkpoints(10, 2000, 40)
    assert pts[0] == 10 and pts[-1] == 2000 and len(pts) == 40
    assert all(b > a for a, b in zip(pts, pts[1:]))
    assert engine.log_checkpoints(1, 3, 40) == [1, 2, 3]
    with pytest.raises(DomainError):
        engine.log_checkpoints(0, 5)
