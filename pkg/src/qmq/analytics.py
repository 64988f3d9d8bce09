"""Closed-form rates and estimates for weak charge-sensor readout.

Each rate is returned as a :class:`RatePrediction` carrying a validity flag.
The perturbative relaxation and leakage rates break down when the phase a
level pair accumulates during one meter step is close to a multiple of
``2 pi``; such inputs are flagged, not rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import i0, i0e, i1e, ndtr

from .errors import DomainError
from .linalg import HBAR

#: half-width (rad) of the flagged band around each resonance
DEFAULT_GUARD = 0.4


@dataclass(frozen=True)
class RatePrediction:
    """A rate in 1/ns plus a validity flag and alternative evaluations."""

    value: float
    valid: bool = True
    reason: str = ""
    variants: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.value < 0:
            raise DomainError("rates are non-negative")

    def __float__(self) -> float:
        return self.value


def normal_cdf(x: float) -> float:
    """Standard normal CDF, via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def modified_bessel_i0(x: float) -> float:
    return float(i0(x))


def scaled_bessel_i0(x: float) -> float:
    """``exp(-|x|) I0(x)``, finite for arbitrarily large arguments."""
    return float(i0e(x))


def transmission_probability(gamma_eff: float, delta_tau: float, hbar: float = HBAR) -> float:
    return math.sin(gamma_eff * delta_tau / hbar) ** 2


def delta_p(
    gamma: float, delta_gamma: float, delta_tau: float, delta_z: float = 0.0, hbar: float = HBAR
) -> float:
    """Per-step transmission-probability contrast between the two readout states.

    The high state tunnels with ``gamma + delta_z``, the low one with
    ``gamma - delta_gamma``.
    """
    return transmission_probability(gamma + delta_z, delta_tau, hbar) - transmission_probability(
        gamma - delta_gamma, delta_tau, hbar
    )


def calibrated_gamma(delta_gamma: float, delta_tau: float, delta_z: float = 0.0, hbar: float = HBAR) -> float:
    """Meter tunneling for which ``delta_tau`` is the calibrated step."""
    return hbar * math.pi / (4.0 * delta_tau) + 0.5 * (delta_gamma - delta_z)


def measurement_rate(
    delta_gamma: float,
    delta_tau: float,
    delta_z: float = 0.0,
    gamma: float | None = None,
    hbar: float = HBAR,
) -> RatePrediction:
    """Rate at which the count distributions of the two readout states separate.

    ``value`` is the leading-order ``((delta_gamma + delta_z)/hbar)^2 delta_tau / 2``;
    ``variants["exact"]`` is ``dp^2 / (2 (1 - dp^2) delta_tau)`` with the exact
    per-step contrast ``dp``. If ``gamma`` is omitted it is inferred from the
    timestep calibration.
    """
    if not delta_tau > 0:
        raise DomainError("delta_tau must be positive")
    lead = 0.5 * ((delta_gamma + delta_z) / hbar) ** 2 * delta_tau
    if gamma is None:
        gamma = calibrated_gamma(delta_gamma, delta_tau, delta_z, hbar)
    dp = delta_p(gamma, delta_gamma, delta_tau, delta_z, hbar)
    exact = dp**2 / (2.0 * (1.0 - dp**2) * delta_tau)
    return RatePrediction(lead, variants={"leading_order": lead, "exact": exact, "delta_p": dp})


def dephasing_rate(delta_p: float, delta_tau: float) -> RatePrediction:
    """``-ln(1 - dp^2) / (2 delta_tau)``; the quadratic form is in ``variants``."""
    if not abs(delta_p) < 1:
        raise DomainError("|delta_p| must be smaller than 1")
    if not delta_tau > 0:
        raise DomainError("delta_tau must be positive")
    exact = -math.log1p(-(delta_p**2)) / (2.0 * delta_tau)
    quad = delta_p**2 / (2.0 * delta_tau)
    return RatePrediction(exact, variants={"exact": exact, "quadratic": quad})


def _resonance_offset(phase: float) -> float:
    """Distance of ``phase`` from the nearest multiple of ``2 pi``."""
    return abs(phase - 2.0 * math.pi * round(phase / (2.0 * math.pi)))


def relaxation_rate_charge(
    t: float,
    delta_gamma: float,
    epsilon: float,
    delta_tau: float,
    guard: float = DEFAULT_GUARD,
    hbar: float = HBAR,
) -> RatePrediction:
    """Sensor-induced relaxation of the charge qubit,
    ``t^2 dg^2 sin^2(eps dt / hbar) / (2 eps^4 dt)``.

    Flagged invalid when ``2 Omega dt / hbar`` (``Omega = sqrt(eps^2 + t^2)``)
    lies within ``guard`` of a multiple of ``2 pi``.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    value = 0.5 * t**2 * delta_gamma**2 / (epsilon**4 * delta_tau) * math.sin(
        epsilon * delta_tau / hbar
    ) ** 2
    omega = math.hypot(epsilon, t)
    phase = 2.0 * omega * delta_tau / hbar
    off = _resonance_offset(phase)
    if off < guard:
        return RatePrediction(
            value, False, f"2*Omega*dt/hbar = {phase:.4f} is {off:.3f} rad from a multiple of 2pi",
            {"phase": phase},
        )
    return RatePrediction(value, variants={"phase": phase})


def leakage_rate(
    delta_x: float,
    z_r: float,
    delta_tau: float,
    guard: float = DEFAULT_GUARD,
    hbar: float = HBAR,
) -> RatePrediction:
    """Readout-induced leakage out of ``|dd>``, ``2 dx^2 sin^2(Z_R dt / hbar) / (Z_R^2 dt)``.

    ``z_r`` is the coefficient of the right-dot spin operator with eigenvalues
    +-1, i.e. half the right-dot Zeeman splitting.
    """
    if not z_r > 0:
        raise DomainError("z_r must be positive")
    value = 2.0 * delta_x**2 / (z_r**2 * delta_tau) * math.sin(z_r * delta_tau / hbar) ** 2
    phase = 2.0 * z_r * delta_tau / hbar
    off = _resonance_offset(phase)
    if off < guard:
        return RatePrediction(
            value, False, f"2*Z_R*dt/hbar = {phase:.4f} is {off:.3f} rad from a multiple of 2pi",
            {"phase": phase},
        )
    return RatePrediction(value, variants={"phase": phase})


def spin_residual_tunneling_rates(
    t: float,
    delta_gamma: float,
    epsilon: float,
    U: float,
    z_l: float,
    z_r: float,
    delta_tau: float,
    hbar: float = HBAR,
) -> tuple[RatePrediction, RatePrediction]:
    """Rates ``2 b / dt`` for S(0,2) <-> ud and S(0,2) <-> du caused by residual tunneling.

    ``b = 4 dg^2 t^2 sin^2(D dt / (2 hbar)) / D^4`` with ``D = eps - U +- (Z_L - Z_R)``.
    """
    dz = z_l - z_r
    out = []
    for gap in (epsilon - U + dz, epsilon - U - dz):
        if gap == 0:
            raise DomainError("resonant denominator eps - U = -+ (Z_L - Z_R)")
        b = 4.0 * delta_gamma**2 * t**2 / gap**4 * math.sin(gap * delta_tau / (2.0 * hbar)) ** 2
        out.append(RatePrediction(2.0 * b / delta_tau, variants={"b": b, "gap": gap}))
    return out[0], out[1]


def infidelity_estimate(gamma_m: float, gamma_rel: float, tau) -> np.ndarray | float:
    """``1 - Phi(sqrt(2 Gm tau)) + (1 - exp(-x) I0(x)) / 2`` with ``x = Grel tau / 2``."""
    if gamma_m < 0 or gamma_rel < 0:
        raise DomainError("rates must be non-negative")
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0):
        raise DomainError("integration time must be non-negative")
    x = 0.5 * gamma_rel * tau_arr
    val = 1.0 - ndtr(np.sqrt(2.0 * gamma_m * tau_arr)) + 0.5 * (1.0 - i0e(x))
    return float(val) if np.ndim(tau) == 0 else val


@dataclass(frozen=True)
class IdealTime:
    closed_form: float
    refined: float


def _optimum_condition(tau: float, gamma_m: float, gamma_rel: float) -> float:
    x = 0.5 * gamma_rel * tau
    lhs = 0.5 * x * (i0e(x) - i1e(x))
    rhs = math.sqrt(gamma_m * tau) * math.exp(-gamma_m * tau) / (2.0 * math.sqrt(math.pi))
    return lhs - rhs


def ideal_integration_time(gamma_m: float, gamma_rel: float, rtol: float = 1e-6) -> IdealTime:
    """Integration time minimizing :func:`infidelity_estimate`.

    Returns the logarithmic estimate ``ln(2 Gm / Grel) / Gm`` and the root of
    the stationarity condition, bracketed in ``[0.1, 10]`` times the estimate.
    """
    if not gamma_rel > 0:
        raise DomainError("gamma_rel must be positive")
    if not gamma_rel < 2.0 * gamma_m:
        raise DomainError("no infidelity minimum unless gamma_rel < 2 gamma_m")
    closed = math.log(2.0 * gamma_m / gamma_rel) / gamma_m
    lo, hi = 0.1 * closed, 10.0 * closed
    f = lambda tau: _optimum_condition(tau, gamma_m, gamma_rel)  # noqa: E731
    if f(lo) * f(hi) > 0:
        grid = np.geomspace(1e-3 * closed, 1e3 * closed, 400)
        vals = np.array([f(g) for g in grid])
        idx = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
        if idx.size == 0:
            raise DomainError("no stationary point of the infidelity estimate found")
        lo, hi = grid[idx[0]], grid[idx[0] + 1]
    root = brentq(f, lo, hi, xtol=1e-300, rtol=rtol * 1e-3)
    return IdealTime(closed, float(root))
