"""Hamiltonians of the measured systems and of the meter qubit.

Energies are in micro-electronvolts, times in nanoseconds, so that
``hbar = 0.6582119569 ueV ns``. In every joint Hamiltonian the meter (basis
``B`` = bottom, ``T`` = top) is the last tensor factor.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .linalg import HBAR

ELEMENTARY_CHARGE = 1.602176634e-19  # C
MU_B = 57.88381806  # ueV / T


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = HBAR
    elementary_charge: float = ELEMENTARY_CHARGE
    mu_B: float = MU_B


CONSTANTS = PhysicalConstants()

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

CHARGE_BASIS = ("L", "R")
METER_BASIS = ("B", "T")

#: two-electron basis of the double dot; "ud" means up spin on the left dot,
#: down spin on the right dot.
SPIN_BASIS = ("S20", "S02", "ud", "uu", "dd", "du")
S20, S02, UD, UU, DD, DU = range(6)

#: Zeeman term conventions for the two-electron model: ``"pauli"`` uses
#: ``Z * (n_up - n_down)`` per dot (the same spin operator that multiplies the
#: spin-charge coupling vector), ``"half"`` uses ``Z / 2 * (n_up - n_down)``.
ZEEMAN_CONVENTIONS = ("pauli", "half")


@dataclass(frozen=True)
class ChargeQubitParams:
    """Charge qubit plus meter. ``epsilon`` is half of the on-site detuning."""

    epsilon: float
    t: float
    gamma: float
    delta_gamma: float

    def validate(self) -> None:
        if not self.gamma > 0:
            raise DomainError("meter tunneling gamma must be positive")
        if self.delta_gamma < 0:
            raise DomainError("delta_gamma must be non-negative")
        if not self.delta_gamma < self.gamma:
            raise DomainError(
                "delta_gamma must be smaller than gamma (weak-measurement regime)"
            )


@dataclass(frozen=True)
class SpinQubitParams:
    """Two-electron double dot plus meter, including the spin-charge coupling ``delta``."""

    epsilon: float
    t: float
    U: float
    z_l: float
    z_r: float
    gamma: float
    delta_gamma: float
    delta: tuple[float, float, float] = (0.0, 0.0, 0.0)
    zeeman_convention: str = "pauli"

    @property
    def delta_z_field(self) -> float:
        """Zeeman energy difference ``Z_L - Z_R``."""
        return self.z_l - self.z_r

    @property
    def delta_x(self) -> float:
        return self.delta[0]

    @property
    def delta_z(self) -> float:
        return self.delta[2]

    def validate(self) -> None:
        if not self.U > 0:
            raise DomainError("on-site Coulomb energy U must be positive")
        if not self.gamma > 0:
            raise DomainError("meter tunneling gamma must be positive")
        if self.delta_gamma < 0 or not self.delta_gamma < self.gamma:
            raise DomainError(
                "delta_gamma must satisfy 0 <= delta_gamma < gamma (weak-measurement regime)"
            )
        if self.t != 0 and self.z_l == self.z_r:
            raise DomainError("Z_L must differ from Z_R when residual tunneling is on")
        if self.zeeman_convention not in ZEEMAN_CONVENTIONS:
            raise DomainError(f"unknown Zeeman convention {self.zeeman_convention!r}")
        if len(self.delta) != 3:
            raise DomainError("delta must be a 3-vector")
        if np.linalg.norm(self.delta) > 0.1 * self.gamma:
            warnings.warn(
                "spin-charge coupling |delta| is not small compared to gamma",
                stacklevel=2,
            )


def meter_hamiltonian(gamma: float) -> np.ndarray:
    return gamma * SIGMA_X


def charge_hamiltonian(epsilon: float, t: float) -> np.ndarray:
    return epsilon * SIGMA_Z + t * SIGMA_X


def charge_interaction(delta_gamma: float) -> np.ndarray:
    """System part of ``-delta_gamma |R><R| (x) tau_x``."""
    return -delta_gamma * np.diag([0.0, 1.0]).astype(complex)


def build_charge_total_hamiltonian(p: ChargeQubitParams) -> np.ndarray:
    """4x4 Hamiltonian in the product basis (L,B), (L,T), (R,B), (R,T)."""
    h_sys = charge_hamiltonian(p.epsilon, p.t)
    return (
        np.kron(h_sys, IDENTITY_2)
        + np.kron(np.eye(2), meter_hamiltonian(p.gamma))
        + np.kron(charge_interaction(p.delta_gamma), SIGMA_X)
    )


def charge_eigenbasis(epsilon: float, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Excited and ground state of the charge qubit, in the (L, R) basis.

    Phases are fixed so the largest-magnitude component is real positive.
    """
    _, v = np.linalg.eigh(charge_hamiltonian(epsilon, t))
    g, e = v[:, 0], v[:, 1]
    return _fix_phase(e), _fix_phase(g)


def _fix_phase(psi: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(psi)))
    return psi * (abs(psi[k]) / psi[k])


# --- two-electron Hubbard model -------------------------------------------

_MODES = ("Lu", "Ld", "Ru", "Rd")


@lru_cache(maxsize=None)
def _fock_operators() -> tuple[np.ndarray, ...]:
    """Annihilation operators of the four modes (Jordan-Wigner, 16-dim Fock space)."""
    a = np.array([[0, 1], [0, 0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    ops = []
    for j in range(4):
        factors = [z] * j + [a] + [np.eye(2)] * (3 - j)
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        ops.append(op)
    return tuple(ops)


@lru_cache(maxsize=None)
def _two_electron_states() -> np.ndarray:
    """Columns: Fock vectors of the six basis states in SPIN_BASIS order."""
    lu, ld, ru, rd = _fock_operators()
    vac = np.zeros(16, dtype=complex)
    vac[0] = 1.0
    cr = lambda op: op.conj().T  # noqa: E731
    states = [
        cr(lu) @ cr(ld) @ vac,  # S(2,0)
        cr(ru) @ cr(rd) @ vac,  # S(0,2)
        cr(lu) @ cr(rd) @ vac,  # up down
        cr(lu) @ cr(ru) @ vac,  # up up
        cr(ld) @ cr(rd) @ vac,  # down down
        cr(ld) @ cr(ru) @ vac,  # down up
    ]
    basis = np.stack(states, axis=1)
    assert np.allclose(basis.conj().T @ basis, np.eye(6))
    return basis


def _project(op: np.ndarray) -> np.ndarray:
    b = _two_electron_states()
    return b.conj().T @ op @ b


@lru_cache(maxsize=None)
def _hubbard_terms() -> dict[str, np.ndarray]:
    lu, ld, ru, rd = _fock_operators()
    n = {m: o.conj().T @ o for m, o in zip(_MODES, (lu, ld, ru, rd))}
    hop = sum(
        r.conj().T @ l + l.conj().T @ r for l, r in ((lu, ru), (ld, rd))
    )
    terms = {
        "onsite": 0.5 * (n["Lu"] + n["Ld"] - n["Ru"] - n["Rd"]),
        "tun": hop,
        "zl": n["Lu"] - n["Ld"],
        "zr": n["Ru"] - n["Rd"],
        "coulomb": n["Lu"] @ n["Ld"] + n["Ru"] @ n["Rd"],
        "sx_r": ru.conj().T @ rd + rd.conj().T @ ru,
        "sy_r": -1j * ru.conj().T @ rd + 1j * rd.conj().T @ ru,
        "sz_r": n["Ru"] - n["Rd"],
    }
    out = {k: _project(v) for k, v in terms.items()}
    for v in out.values():
        v.setflags(write=False)
    return out


def right_spin_operators() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-dot spin operators (n_up - n_down normalization) in SPIN_BASIS."""
    terms = _hubbard_terms()
    return terms["sx_r"].copy(), terms["sy_r"].copy(), terms["sz_r"].copy()


def _zeeman_factor(convention: str) -> float:
    if convention == "pauli":
        return 1.0
    if convention == "half":
        return 0.5
    raise DomainError(f"unknown Zeeman convention {convention!r}")


def build_spin_hamiltonian(p: SpinQubitParams) -> np.ndarray:
    """6x6 two-site Hubbard Hamiltonian in SPIN_BASIS order."""
    terms = _hubbard_terms()
    zf = _zeeman_factor(p.zeeman_convention)
    return (
        p.epsilon * terms["onsite"]
        + p.t * terms["tun"]
        + zf * (p.z_l * terms["zl"] + p.z_r * terms["zr"])
        + p.U * terms["coulomb"]
    )


def spin_interaction(p: SpinQubitParams) -> np.ndarray:
    """System factor of the sensor coupling, ``-(dg |S02><S02| + s_R . delta)``."""
    terms = _hubbard_terms()
    dx, dy, dz = p.delta
    charge = np.zeros((6, 6), dtype=complex)
    charge[S02, S02] = 1.0
    spin = dx * terms["sx_r"] + dy * terms["sy_r"] + dz * terms["sz_r"]
    return -(p.delta_gamma * charge + spin)


def build_spin_total_hamiltonian(p: SpinQubitParams) -> np.ndarray:
    """12x12 Hamiltonian of the double dot (SPIN_BASIS order) times the meter."""
    return (
        np.kron(build_spin_hamiltonian(p), IDENTITY_2)
        + np.kron(np.eye(6), meter_hamiltonian(p.gamma))
        + np.kron(spin_interaction(p), SIGMA_X)
    )


def basis_state(index: int, dim: int = 6) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[index] = 1.0
    return psi


def spin_leak_projector() -> np.ndarray:
    """Projector onto the complement of span{|dd>, |S02>}."""
    p = np.eye(6, dtype=complex)
    p[DD, DD] = 0.0
    p[S02, S02] = 0.0
    return p


# --- calibration -----------------------------------------------------------


def calibrate_timestep(
    gamma: float, delta_gamma: float, delta_z: float = 0.0, hbar: float = HBAR
) -> float:
    """Meter step duration giving transmission probability 1/2 on the balanced mixture.

    Returns ``hbar pi / (4 (gamma - (delta_gamma - delta_z) / 2))`` in ns.
    """
    denom = 4.0 * (gamma - 0.5 * (delta_gamma - delta_z))
    if not denom > 0:
        raise DomainError("timestep calibration needs gamma > (delta_gamma - delta_z)/2")
    return hbar * math.pi / denom


def model_currents(
    delta_tau: float,
    gamma: float,
    delta_gamma: float,
    linearized: bool = False,
    hbar: float = HBAR,
) -> tuple[float, float]:
    """Mean sensor current and current contrast in ampere.

    The contrast is the difference between the currents for the qubit in the
    left and in the right dot. ``linearized=True`` returns ``delta_gamma e / hbar``
    instead of the sine expression.
    """
    if not delta_tau > 0:
        raise DomainError("delta_tau must be positive")
    e = ELEMENTARY_CHARGE
    step_s = delta_tau * 1e-9
    mean = e / (2.0 * step_s)
    if linearized:
        contrast = delta_gamma * e / (hbar * 1e-9)
    else:
        p_l = math.sin(delta_tau * gamma / hbar) ** 2
        p_r = math.sin(delta_tau * (gamma - delta_gamma) / hbar) ** 2
        contrast = e / step_s * (p_l - p_r)
    return mean, contrast


# --- assembled readout scenarios --------------------------------------------


@dataclass(frozen=True)
class ReadoutModel:
    """Everything the measurement engine and the metrics need for one scenario.

    ``state_e`` and ``state_g`` are the two computational states that the
    readout should discriminate (system basis vectors).
    """

    name: str
    hamiltonian: np.ndarray
    dim: int
    delta_tau: float
    labels: tuple[str, ...]
    state_e: np.ndarray
    state_g: np.ndarray
    leak_projector: np.ndarray | None = None
    params: object = field(default=None, compare=False)


def charge_readout_model(p: ChargeQubitParams, delta_tau: float | None = None) -> ReadoutModel:
    if delta_tau is None:
        delta_tau = calibrate_timestep(p.gamma, p.delta_gamma)
    e, g = charge_eigenbasis(p.epsilon, p.t)
    return ReadoutModel(
        name="charge",
        hamiltonian=build_charge_total_hamiltonian(p),
        dim=2,
        delta_tau=delta_tau,
        labels=CHARGE_BASIS,
        state_e=e,
        state_g=g,
        params=p,
    )


def spin_readout_model(p: SpinQubitParams, delta_tau: float | None = None) -> ReadoutModel:
    """Spin readout at the (0,2)/(1,1) readout point.

    The inference rule always infers ``e`` above the count threshold, so
    ``e`` here is the high-transmission blockaded state |dd> and ``g`` is S(0,2).
    """
    if delta_tau is None:
        delta_tau = calibrate_timestep(p.gamma, p.delta_gamma, p.delta_z)
    return ReadoutModel(
        name="spin",
        hamiltonian=build_spin_total_hamiltonian(p),
        dim=6,
        delta_tau=delta_tau,
        labels=SPIN_BASIS,
        state_e=basis_state(DD),
        state_g=basis_state(S02),
        leak_projector=spin_leak_projector(),
        params=p,
    )
