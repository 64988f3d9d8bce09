import numpy as np
import pytest

from qmq import models

ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def fig2():
    """Charge-qubit parameters used throughout the charge benchmarks."""
    return dict(epsilon=10.0, gamma=5.0, delta_gamma=0.5)


@pytest.fixture
def fig3():
    return dict(epsilon=1040.0, t=0.0, U=1000.0, z_l=11.0, z_r=9.0, gamma=5.0, delta_gamma=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_charge_params(rng):
    gamma = rng.uniform(2.0, 8.0)
    return models.ChargeQubitParams(
        epsilon=rng.uniform(1.0, 20.0),
        t=rng.uniform(0.0, 3.0),
        gamma=gamma,
        delta_gamma=rng.uniform(0.05, 0.5) * gamma,
    )


def random_spin_params(rng):
    gamma = rng.uniform(2.0, 8.0)
    return models.SpinQubitParams(
        epsilon=rng.uniform(1010.0, 1060.0),
        t=rng.uniform(0.0, 3.0),
        U=1000.0,
        z_l=rng.uniform(8.0, 14.0),
        z_r=rng.uniform(4.0, 7.0),
        gamma=gamma,
        delta_gamma=rng.uniform(0.05, 0.3) * gamma,
        delta=tuple(rng.uniform(-0.05, 0.05, 3)),
    )
