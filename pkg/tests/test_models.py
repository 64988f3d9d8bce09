import math
import warnings

import numpy as np
import pytest

from qmq import models
from qmq.errors import DomainError
from qmq.models import DD, DU, S02, S20, UD, UU


def comm(a, b):
    return a @ b - b @ a


def test_timestep_calibration_value():
    dt = models.calibrate_timestep(5.0, 0.5)
    # hbar pi / (4 (gamma - delta_gamma / 2)) evaluated by hand
    assert math.isclose(dt, 0.6582119569 * math.pi / 19.0, rel_tol=1e-12)
    assert abs(dt - 0.1088) < 1e-4


def test_timestep_gives_half_transmission_on_balanced_mixture():
    gamma, dg = 5.0, 0.5
    dt = models.calibrate_timestep(gamma, dg)
    p_l = math.sin(gamma * dt / models.HBAR) ** 2
    p_r = math.sin((gamma - dg) * dt / models.HBAR) ** 2
    # linearized midpoint: sin^2 at the mean coupling is exactly 1/2
    assert math.isclose(math.sin((gamma - dg / 2) * dt / models.HBAR) ** 2, 0.5, rel_tol=1e-12)
    assert abs(0.5 * (p_l + p_r) - 0.5) < 0.01


def test_timestep_rejects_bad_calibration():
    with pytest.raises(DomainError):
        models.calibrate_timestep(0.1, 0.5, delta_z=-0.5)


def test_currents():
    dt = models.calibrate_timestep(5.0, 0.5)
    mean, contrast = models.model_currents(dt, 5.0, 0.5)
    assert math.isclose(mean, 1.602176634e-19 / (2 * dt * 1e-9))
    assert 0.73e-9 < mean < 0.75e-9
    assert 0.11e-9 < contrast < 0.13e-9
    _, lin = models.model_currents(dt, 5.0, 0.5, linearized=True)
    assert math.isclose(lin, 0.5 * 1.602176634e-19 / (models.HBAR * 1e-9))
    with pytest.raises(DomainError):
        models.model_currents(0.0, 5.0, 0.5)


def test_charge_param_validation():
    models.ChargeQubitParams(10, 0.5, 5, 0.5).validate()
    for bad in ((10, 0, 0, 0), (10, 0, 5, -0.1), (10, 0, 5, 5.0), (10, 0, 5, 6.0)):
        with pytest.raises(DomainError):
            models.ChargeQubitParams(*bad).validate()


def test_charge_hamiltonian_blocks():
    p = models.ChargeQubitParams(10, 0.5, 5, 0.5)
    h = models.build_charge_total_hamiltonian(p)
    assert h.shape == (4, 4)
    np.testing.assert_allclose(h, h.conj().T)
    # product basis (L,B), (L,T), (R,B), (R,T): meter flips within each charge block
    assert h[0, 1] == 5 and h[2, 3] == 5 - 0.5
    assert h[0, 2] == 0.5 and h[0, 0] == 10 and h[2, 2] == -10


@pytest.mark.parametrize("t,commutes", [(0.0, True), (0.5, False), (2.0, False)])
def test_charge_commutator(t, commutes):
    h = models.charge_hamiltonian(10.0, t)
    hi = models.charge_interaction(0.5)
    assert (np.linalg.norm(comm(h, hi)) < 1e-12) == commutes


def test_charge_eigenbasis():
    e, g = models.charge_eigenbasis(10.0, 2.0)
    h = models.charge_hamiltonian(10.0, 2.0)
    omega = math.hypot(10.0, 2.0)
    np.testing.assert_allclose(h @ e, omega * e, atol=1e-12)
    np.testing.assert_allclose(h @ g, -omega * g, atol=1e-12)
    e0, g0 = models.charge_eigenbasis(10.0, 0.0)
    np.testing.assert_allclose(e0, [1, 0])
    np.testing.assert_allclose(g0, [0, 1])


@pytest.mark.parametrize("convention,factor", [("half", 0.5), ("pauli", 1.0)])
def test_spin_diagonal_hand_coded(convention, factor):
    eps, U, zl, zr = 1040.0, 1000.0, 11.0, 9.0
    p = models.SpinQubitParams(eps, 0.0, U, zl, zr, 5.0, 0.5, zeeman_convention=convention)
    h = models.build_spin_hamiltonian(p)
    z = factor
    expected = np.zeros(6)
    expected[S20] = eps + U
    expected[S02] = -eps + U
    expected[UD] = z * (zl - zr)
    expected[UU] = z * (zl + zr)
    expected[DD] = -z * (zl + zr)
    expected[DU] = z * (zr - zl)
    np.testing.assert_allclose(h, np.diag(expected), atol=1e-12)


def test_spin_tunneling_couples_only_singlet():
    p = models.SpinQubitParams(1040.0, 1.5, 1000.0, 0.0, 0.0, 5.0, 0.5)
    h = models.build_spin_hamiltonian(p)
    s11 = (models.basis_state(UD) - models.basis_state(DU)) / math.sqrt(2)
    t0 = (models.basis_state(UD) + models.basis_state(DU)) / math.sqrt(2)
    for ch in (S20, S02):
        v = models.basis_state(ch)
        assert math.isclose(abs(v.conj() @ h @ s11), math.sqrt(2) * 1.5, rel_tol=1e-12)
        assert abs(v.conj() @ h @ t0) < 1e-12
        assert abs(h[ch, UU]) < 1e-12 and abs(h[ch, DD]) < 1e-12


def test_right_spin_operators_are_pauli():
    sx, sy, sz = models.right_spin_operators()
    for s in (sx, sy, sz):
        np.testing.assert_allclose(s @ s, np.diag([0, 0, 1, 1, 1, 1]), atol=1e-12)
    np.testing.assert_allclose(comm(sx, sy), 2j * sz, atol=1e-12)
    # right spin down in ud and dd
    assert sz[UD, UD] == -1 and sz[DD, DD] == -1 and sz[UU, UU] == 1 and sz[DU, DU] == 1
    assert sx[UD, UU] == 1 and sx[DD, DU] == 1


@pytest.mark.parametrize(
    "delta,commutes", [((0, 0, 0.1), True), ((0.05, 0, 0.1), False), ((0, 0.05, 0), False)]
)
def test_spin_commutator(delta, commutes):
    p = models.SpinQubitParams(1040.0, 0.0, 1000.0, 11.0, 9.0, 5.0, 0.5, delta=delta)
    c = comm(models.build_spin_hamiltonian(p), models.spin_interaction(p))
    assert (np.linalg.norm(c) < 1e-12) == commutes


def test_spin_particle_sectors_at_zero_tunneling():
    p = models.SpinQubitParams(1040.0, 0.0, 1000.0, 11.0, 9.0, 5.0, 0.5, delta=(0.1, 0.2, 0.3))
    h = models.build_spin_hamiltonian(p) + models.spin_interaction(p)
    sectors = {S20: 0, S02: 1, UD: 2, UU: 2, DD: 2, DU: 2}
    for i in range(6):
        for j in range(6):
            if sectors[i] != sectors[j]:
                assert h[i, j] == 0


def test_spin_validation():
    base = dict(epsilon=1040.0, t=0.5, U=1000.0, z_l=11.0, z_r=9.0, gamma=5.0, delta_gamma=0.5)
    models.SpinQubitParams(**base).validate()
    for key, value in (("U", 0.0), ("gamma", -1.0), ("delta_gamma", 5.0), ("z_r", 11.0)):
        with pytest.raises(DomainError):
            models.SpinQubitParams(**{**base, key: value}).validate()
    with pytest.raises(DomainError):
        models.SpinQubitParams(**base, zeeman_convention="other").validate()
    with pytest.warns(UserWarning):
        models.SpinQubitParams(**base, delta=(1.0, 0, 0)).validate()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        models.SpinQubitParams(**{**base, "t": 0.0, "z_r": 11.0}).validate()


def test_readout_models():
    spin = models.spin_readout_model(models.SpinQubitParams(1040.0, 0.0, 1000.0, 11.0, 9.0, 5.0, 0.5))
    assert spin.dim == 6 and spin.hamiltonian.shape == (12, 12)
    assert spin.state_e[DD] == 1 and spin.state_g[S02] == 1
    np.testing.assert_allclose(np.diag(spin.leak_projector).real, [1, 0, 1, 1, 0, 1])
    charge = models.charge_readout_model(models.ChargeQubitParams(10, 0, 5, 0.5), delta_tau=0.2)
    assert charge.delta_tau == 0.2 and charge.leak_projector is None
    dz = models.spin_readout_model(
        models.SpinQubitParams(1040.0, 0.0, 1000.0, 11.0, 9.0, 5.0, 0.5, delta=(0, 0, 0.1))
    )
    assert math.isclose(dz.delta_tau, models.calibrate_timestep(5.0, 0.5, 0.1))
