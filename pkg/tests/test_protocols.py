import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmq import models, protocols
from qmq.errors import DomainError
from qmq.models import DD, DU, S02, S20, UD, UU

small = st.floats(0.0, 0.05)


@settings(max_examples=100, deadline=None)
@given(small, small, small, small, small)
def test_forward_inverse_identity(leak, eps_up, eps_down, q1, q2):
    b = protocols.ErrorBudget(leak, eps_up, eps_down, q1, q2)
    back = protocols.estimate_error_budget(protocols.experiment_probabilities(b))
    for name in ("leakage_L", "eps_up", "eps_down", "q1", "q2"):
        assert abs(getattr(back, name) - getattr(b, name)) <= 1e-12
    assert back.clipped == ()


def test_forward_model_by_hand():
    probs = protocols.experiment_probabilities(protocols.ErrorBudget(0.01, 0.02, 0.03, 0.04, 0.05))
    assert probs.p01 == pytest.approx(0.03)
    assert probs.p10 == pytest.approx(0.02)
    assert probs.p11 == pytest.approx(0.04)
    assert probs.p00 == pytest.approx(1 - 0.09)
    assert probs.p0_du == pytest.approx(0.12)
    assert probs.p0_ud == pytest.approx(0.07)
    assert sum([probs.p00, probs.p01, probs.p10, probs.p11]) == pytest.approx(1.0)


def test_negative_estimates_are_clipped_and_flagged():
    est = protocols.estimate_error_budget([0.95, 0.01, 0.03, 0.01, 0.015, 0.04])
    assert est.leakage_L == 0.0 and "leakage_L" in est.clipped
    assert est.eps_down == 0.0 and "eps_down" in est.clipped
    with pytest.raises(DomainError):
        protocols.estimate_error_budget([1.2, 0, 0, 0, 0, 0])


def test_budget_validation():
    with pytest.raises(DomainError):
        protocols.ErrorBudget(leakage_L=-0.1)
    with pytest.warns(UserWarning, match="first-order"):
        protocols.ErrorBudget(eps_up=0.3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        protocols.ErrorBudget(eps_up=0.2)


def test_state_maps():
    conv = protocols.conversion_matrix()
    assert conv[S20, S20] == 1 and conv[UD, S02] == 1 and conv[DU, UD] == 1 and conv[S02, DU] == 1
    assert conv[UU, UU] == 1 and conv[DD, DD] == 1
    x = protocols.x_both_matrix()
    np.testing.assert_array_equal(x @ x, np.eye(6))
    with pytest.raises(DomainError):
        protocols.permutation_matrix({0: 1, 1: 1}, d=2)


def test_prepared_states():
    du = protocols.prepared_state("du", 0.1, 0.05)
    assert du[DU, DU] == pytest.approx(0.85) and du[DD, DD] == 0.1 and du[UD, UD] == 0.05
    dd = protocols.prepared_state("dd", 0.1, 0.05)
    assert dd[DD, DD] == pytest.approx(0.85) and dd[DU, DU] == 0.1 and dd[UU, UU] == 0.05
    ud = protocols.prepared_state("ud")
    assert ud[UD, UD] == 1
    for rho in (du, dd, ud):
        assert np.trace(rho).real == pytest.approx(1.0)
    with pytest.raises(DomainError):
        protocols.prepared_state("uu")


def fig3_spin(dx):
    return models.SpinQubitParams(1040.0, 0.0, 1000.0, 11.0, 9.0, 5.0, 0.5, delta=(dx, 0.0, 0.0))


def test_simulated_experiment_without_errors():
    res = protocols.simulate_leakage_experiment(fig3_spin(0.0), 300, 2000, seed=5)
    assert res.true_leakage == pytest.approx(0.0, abs=1e-12)
    assert res.probabilities.p01 - res.probabilities.p10 == pytest.approx(0.0, abs=1e-10)
    assert abs(res.estimated_budget.leakage_L) <= 4 * res.leakage_sigma + 1e-3
    assert res.k_critical == pytest.approx(0.5, abs=0.02)


def test_simulated_experiment_recovers_leakage(tmp_path):
    res = protocols.simulate_leakage_experiment(fig3_spin(0.05), 600, 10000, seed=1)
    assert abs(res.estimated_budget.leakage_L - res.true_leakage) < 2 * res.leakage_sigma
    exact_l = res.probabilities.p01 - res.probabilities.p10
    assert exact_l == pytest.approx(res.true_leakage, rel=0.1)
    probs = res.probabilities
    assert probs.p00 + probs.p01 + probs.p10 + probs.p11 == pytest.approx(1.0, abs=1e-10)
    data = json.loads(res.write_json(tmp_path / "r.json").read_text())
    assert {"p00", "p01", "p10", "p11", "estimated_budget", "true_leakage"} <= set(data)


def test_simulated_experiment_is_seeded():
    a = protocols.simulate_leakage_experiment(fig3_spin(0.05), 200, 1000, seed=9)
    b = protocols.simulate_leakage_experiment(fig3_spin(0.05), 200, 1000, seed=9)
    assert a.as_dict() == b.as_dict()


def test_initialization_errors_in_exact_probabilities():
    # a du admixture in the dd preparation is blockaded in round 1 and, after X on
    # both spins, not blockaded in round 2: it adds to p10 (the first-order model puts
    # q1 in p11); a du admixture in the ud preparation adds to P(1 | ud)
    base = protocols.simulate_leakage_experiment(fig3_spin(0.0), 600, 1000, seed=4).probabilities
    err = protocols.simulate_leakage_experiment(fig3_spin(0.0), 600, 1000, seed=4, q1=0.03, q2=0.02).probabilities
    assert err.p10 - base.p10 == pytest.approx(0.03, abs=0.005)
    assert abs(err.p11 - base.p11) < 0.005
    assert err.p0_ud - base.p0_ud == pytest.approx(0.02, abs=0.005)


def test_few_shots_warn():
    with pytest.warns(UserWarning, match="shots"):
        protocols.simulate_leakage_experiment(fig3_spin(0.0), 50, 50, seed=0)
