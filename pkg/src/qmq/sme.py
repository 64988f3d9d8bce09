"""Jump-unraveled stochastic Schroedinger equation for a charge qubit next to a QPC.

Every detected electron applies the jump operator ``J = T + chi n_R`` with
``n_R = |R><R|``; between jumps the state drifts under
``-i H / hbar - J^dag J / 2 + P_tr / 2`` with ``P_tr = <J^dag J>``. Since ``J``
is diagonal in the charge basis it commutes with the back-action part, and
the coherent part is split off exactly. The QPC
amplitudes are matched to the step model: ``D = p_L / dt`` and
``D' = p_R / dt`` are the transmission rates for the qubit in the left and
in the right dot.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analytics import delta_p, dephasing_rate, measurement_rate, relaxation_rate_charge
from .errors import DomainError
from .linalg import HBAR, hermitian_propagator
from .models import ChargeQubitParams, charge_eigenbasis, charge_hamiltonian

CHI_FORMS = ("linearized", "exact")
#: uniforms drawn per refill of a trajectory's random stream
_CHUNK = 4096


@dataclass(frozen=True)
class SmeParams:
    """QPC rates (1/ns) and real jump amplitudes (1/sqrt(ns)).

    ``d_rate`` and ``d_prime_rate`` are the exact matched rates. The simulator
    uses ``t_amp`` and ``chi``; with ``chi_form="linearized"`` the amplitudes
    follow the first-order matching ``T = sqrt(D)``,
    ``chi = -(delta_gamma / hbar) sqrt(2 dt)``, so ``(T + chi)^2`` differs from
    ``d_prime_rate``.
    """

    d_rate: float
    d_prime_rate: float
    t_amp: float
    chi: float
    qubit: ChargeQubitParams
    chi_form: str = "linearized"
    delta_tau: float = float("nan")

    def __post_init__(self) -> None:
        if self.d_rate < 0 or self.d_prime_rate < 0:
            raise DomainError("QPC rates must be non-negative")
        if self.t_amp != 0 and abs(self.chi) > 0.25 * abs(self.t_amp):
            warnings.warn("|chi| is not small compared to |T|", stacklevel=2)

    @property
    def jump_rates(self) -> tuple[float, float]:
        """Jump rates with the qubit in L and in R as used by the simulator."""
        return self.t_amp**2, (self.t_amp + self.chi) ** 2

    @property
    def dephasing_rate(self) -> float:
        return 0.5 * self.chi**2


def match_parameters(
    gamma: float,
    delta_gamma: float,
    delta_tau: float,
    qubit: ChargeQubitParams | None = None,
    chi_form: str = "linearized",
    hbar: float = HBAR,
) -> SmeParams:
    if chi_form not in CHI_FORMS:
        raise DomainError(f"chi_form must be one of {CHI_FORMS}")
    if not delta_tau > 0:
        raise DomainError("delta_tau must be positive")
    p_l = math.sin(gamma * delta_tau / hbar) ** 2
    p_r = math.sin((gamma - delta_gamma) * delta_tau / hbar) ** 2
    d, dp = p_l / delta_tau, p_r / delta_tau
    t_amp = math.sqrt(d)
    if chi_form == "linearized":
        chi = -(delta_gamma / hbar) * math.sqrt(2.0 * delta_tau)
    else:
        chi = math.sqrt(dp) - t_amp
    if qubit is None:
        qubit = ChargeQubitParams(0.0, 0.0, gamma, delta_gamma)
    return SmeParams(d, dp, t_amp, chi, qubit, chi_form, delta_tau)


# --- trajectories -----------------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    jump_times: np.ndarray
    seed: int
    index: int = 0

    def cumulative_jumps(self) -> np.ndarray:
        return np.searchsorted(self.jump_times, self.times, side="right")

    def write_csv(self, path) -> Path:
        path = Path(path)
        jumps = self.cumulative_jumps()
        d = self.states.shape[1]
        header = ["time_ns"]
        for k in range(d):
            header += [f"re_psi{k}", f"im_psi{k}"]
        header.append("cumulative_jumps")
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t, psi, n in zip(self.times, self.states, jumps):
                row = [f"{t:.12g}"]
                for a in psi:
                    row += [f"{a.real:.12g}", f"{a.imag:.12g}"]
                row.append(str(int(n)))
                w.writerow(row)
        return path


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent counter-based (Philox) stream for trajectory ``index``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def _check_dt(p: SmeParams, dt: float) -> None:
    rmax = max(p.d_rate, p.d_prime_rate, *p.jump_rates)
    if not dt > 0 or dt > 0.01 / rmax * (1 + 1e-12):
        raise DomainError(f"dt must satisfy 0 < dt <= 0.01 / max rate = {0.01 / rmax:.4g} ns")


def _as_state(state) -> np.ndarray:
    psi = np.asarray(state, dtype=complex)
    if psi.ndim == 2:
        w, v = np.linalg.eigh(psi)
        if w[-1] < 1 - 1e-9:
            raise DomainError("trajectories start from pure states")
        psi = v[:, -1]
    return psi / np.linalg.norm(psi)


class _Unraveling:
    """Vectorized jump integrator over a batch of trajectories.

    A step is a symmetric split: coherent propagation for ``dt / 2``, the
    detector back-action for ``dt``, coherent propagation for ``dt / 2``.
    Because ``J`` is diagonal in the charge basis the back-action part is
    sampled exactly: the number ``k`` of detected electrons follows the
    mixture ``sum_i |psi_i|^2 Poisson(a_i dt)`` with ``a_i = |J_ii|^2``, and the
    state becomes ``J^k exp(-J^dag J dt / 2) psi`` normalized. This keeps the
    charge populations an exact martingale, as in continuous time; a first
    order jump/no-jump draw would not, and its O(dt^2) per-step drift
    accumulates into a visible bias on the slow relaxation rate.
    """

    K_MAX = 3

    def __init__(self, p: SmeParams, dt: float, hbar: float = HBAR):
        h = charge_hamiltonian(p.qubit.epsilon, p.qubit.t)
        self.u_half = hermitian_propagator(h, 0.5 * dt, hbar)
        j_diag = np.array([p.t_amp, p.t_amp + p.chi], dtype=float)
        rates = j_diag**2
        mu = rates * dt
        k = np.arange(self.K_MAX + 1)
        fact = np.array([math.factorial(int(x)) for x in k], dtype=float)
        # pk[i, k] = exp(-mu_i) mu_i^k / k!
        self.pk = np.exp(-mu)[:, None] * mu[:, None] ** k[None, :] / fact[None, :]
        # amplitude factor for k detected electrons: J^k exp(-J^2 dt / 2)
        self.factor = np.exp(-0.5 * mu)[:, None] * j_diag[:, None] ** k[None, :]
        self.dt = dt

    def step(self, a: np.ndarray, b: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Advance the L and R amplitude arrays in place; returns detected-electron counts."""
        (u00, u01), (u10, u11) = self.u_half
        x = u00 * a + u01 * b
        y = u10 * a + u11 * b
        pop_a = x.real**2 + x.imag**2
        pop_b = y.real**2 + y.imag**2
        cdf = pop_a * self.pk[0, 0] + pop_b * self.pk[1, 0]
        counts = (u >= cdf).astype(np.intp)
        for k in range(1, self.K_MAX):
            cdf = cdf + pop_a * self.pk[0, k] + pop_b * self.pk[1, k]
            counts += u >= cdf
        x *= self.factor[0][counts]
        y *= self.factor[1][counts]
        a[:] = u00 * x + u01 * y
        b[:] = u10 * x + u11 * y
        norm = np.sqrt(a.real**2 + a.imag**2 + b.real**2 + b.imag**2)
        a /= norm
        b /= norm
        return counts


def simulate_ensemble(
    p: SmeParams,
    state0,
    dt: float,
    duration: float,
    n_traj: int,
    seed: int,
    record_every: int = 1,
    first_index: int = 0,
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Run ``n_traj`` trajectories side by side.

    Returns ``(times, states, jump_times)`` with ``states`` of shape
    ``(n_records, n_traj, 2)`` and one array of jump times per trajectory.
    Trajectory ``i`` uses the stream ``trajectory_rng(seed, first_index + i)``, so
    results do not depend on how trajectories are batched.
    """
    _check_dt(p, dt)
    if duration < 0 or n_traj < 1 or record_every < 1:
        raise DomainError("need duration >= 0, n_traj >= 1, record_every >= 1")
    n_steps = int(round(duration / dt))
    psi0 = _as_state(state0)
    amp_l = np.full(n_traj, psi0[0], dtype=complex)
    amp_r = np.full(n_traj, psi0[1], dtype=complex)
    rngs = [trajectory_rng(seed, first_index + i) for i in range(n_traj)]
    integ = _Unraveling(p, dt)
    n_rec = n_steps // record_every + 1
    states = np.empty((n_rec, n_traj, 2), dtype=complex)
    states[0] = psi0
    jumps: list[list[float]] = [[] for _ in range(n_traj)]
    uniforms = None
    for s in range(n_steps):
        c = s % _CHUNK
        if c == 0:
            uniforms = np.stack([g.random(_CHUNK) for g in rngs], axis=1)
        counts = integ.step(amp_l, amp_r, uniforms[c])
        if counts.any():
            t_jump = (s + 1) * dt
            for i in np.flatnonzero(counts):
                jumps[i].extend([t_jump] * int(counts[i]))
        if (s + 1) % record_every == 0:
            r = (s + 1) // record_every
            states[r, :, 0] = amp_l
            states[r, :, 1] = amp_r
    times = np.arange(n_rec) * record_every * dt
    return times, states, [np.array(j) for j in jumps]


def simulate_trajectory(
    p: SmeParams, rho0, dt: float, duration: float, seed: int, index: int = 0, record_every: int = 1
) -> Trajectory:
    """Single trajectory; identical to member ``index`` of an ensemble with the same seed."""
    times, states, jumps = simulate_ensemble(
        p, rho0, dt, duration, 1, seed, record_every=record_every, first_index=index
    )
    return Trajectory(times, states[:, 0, :], jumps[0], int(seed), index)


def ensemble_density_matrices(states: np.ndarray) -> np.ndarray:
    """Average ``|psi><psi|`` over the trajectory axis of ``(n_rec, n_traj, d)``."""
    return np.einsum("tni,tnj->tij", states, states.conj()) / states.shape[1]


def _fit_rate(times: np.ndarray, y: np.ndarray) -> float:
    a = np.vstack([times, np.ones_like(times)]).T
    coef, *_ = np.linalg.lstsq(a, np.log(y), rcond=None)
    return float(-coef[0])


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    sigma: float


def _decay_with_jackknife(times, per_traj, observable, groups: int = 20) -> RateEstimate:
    """Fit ``exp(-rate t)`` to ``observable(mean over trajectories)`` with a jackknife error."""
    n = per_traj.shape[1]
    full = _fit_rate(times, observable(per_traj.mean(axis=1)))
    edges = np.linspace(0, n, groups + 1).astype(int)
    est = []
    for g in range(groups):
        keep = np.ones(n, bool)
        keep[edges[g] : edges[g + 1]] = False
        est.append(_fit_rate(times, observable(per_traj[:, keep].mean(axis=1))))
    est = np.array(est)
    sigma = math.sqrt((groups - 1) / groups * np.sum((est - est.mean()) ** 2))
    return RateEstimate(full, sigma)


def ensemble_dephasing_rate(
    p: SmeParams, n_traj: int = 2000, seed: int = 0, span: float = 2.0, dt: float | None = None
) -> RateEstimate:
    """Decay rate of ``|<L|rho|R>|`` for an ensemble started in ``(|L> + |R>)/sqrt 2``.

    Meant for ``t = 0``, where the coherence decays at ``chi^2 / 2``.
    """
    if dt is None:
        dt = 0.01 / max(p.d_rate, p.d_prime_rate, *p.jump_rates)
    duration = span / max(p.dephasing_rate, 1e-12)
    rec = max(1, int(duration / dt / 40))
    times, states, _ = simulate_ensemble(
        p, np.array([1.0, 1.0]) / math.sqrt(2), dt, duration, n_traj, seed, record_every=rec
    )
    coh = states[:, :, 0] * states[:, :, 1].conj()
    return _decay_with_jackknife(times[1:], coh[1:], np.abs)


def ensemble_relaxation_rate(
    p: SmeParams, n_traj: int = 2000, seed: int = 0, span: float = 1.0, rate_guess: float | None = None,
    dt: float | None = None,
) -> RateEstimate:
    """Decay rate of ``rho_ee - rho_gg`` (qubit eigenbasis) for an ensemble started in ``|e>``."""
    if dt is None:
        dt = 0.01 / max(p.d_rate, p.d_prime_rate, *p.jump_rates)
    if rate_guess is None:
        rate_guess = compare_rates(
            p.qubit.gamma, p.qubit.delta_gamma, p.qubit.epsilon, p.qubit.t, p.delta_tau
        ).sme["gamma_rel"]
    duration = span / rate_guess
    rec = max(1, int(duration / dt / 40))
    e, g = charge_eigenbasis(p.qubit.epsilon, p.qubit.t)
    times, states, _ = simulate_ensemble(p, e, dt, duration, n_traj, seed, record_every=rec)
    diff = np.abs(states @ e.conj()) ** 2 - np.abs(states @ g.conj()) ** 2
    return _decay_with_jackknife(times[1:], diff[1:], lambda x: x)


# --- rate comparison -----------------------------------------------------------------


@dataclass(frozen=True)
class RateComparison:
    qmq: dict[str, float]
    sme: dict[str, float]
    ratios: dict[str, float]
    sme_self_consistent: dict[str, float]
    params: dict[str, float]

    def as_dict(self) -> dict:
        return {
            "qmq": self.qmq,
            "sme": self.sme,
            "ratios": self.ratios,
            "sme_self_consistent": self.sme_self_consistent,
            "params": self.params,
        }


def _sme_rates(chi: float, epsilon: float, t: float, hbar: float) -> dict[str, float]:
    gd = 0.5 * chi**2
    rel = 4.0 * t**2 * gd / ((hbar * gd) ** 2 + (2.0 * epsilon) ** 2)
    return {"gamma_m": gd, "gamma_d": gd, "gamma_rel": rel}


def compare_rates(
    gamma: float, delta_gamma: float, epsilon: float, t: float, delta_tau: float, hbar: float = HBAR
) -> RateComparison:
    """Measurement, dephasing and relaxation rates of the step model and of the SME.

    The SME column uses the linearized ``chi``; the self-consistent column uses
    ``chi = sqrt(D') - sqrt(D)`` from the exact matched rates.
    """
    dp = delta_p(gamma, delta_gamma, delta_tau, hbar=hbar)
    qmq = {
        "gamma_m": measurement_rate(delta_gamma, delta_tau, gamma=gamma, hbar=hbar).value,
        "gamma_d": dephasing_rate(dp, delta_tau).value,
        "gamma_rel": relaxation_rate_charge(t, delta_gamma, epsilon, delta_tau, hbar=hbar).value
        if epsilon > 0
        else float("nan"),
    }
    lin = match_parameters(gamma, delta_gamma, delta_tau, chi_form="linearized", hbar=hbar)
    ex = match_parameters(gamma, delta_gamma, delta_tau, chi_form="exact", hbar=hbar)
    sme = _sme_rates(lin.chi, epsilon, t, hbar)
    sc = _sme_rates(ex.chi, epsilon, t, hbar)
    ratios = {k: (sme[k] / qmq[k] if qmq[k] else float("nan")) for k in qmq}
    return RateComparison(
        qmq,
        sme,
        ratios,
        sc,
        {
            "gamma": gamma, "delta_gamma": delta_gamma, "epsilon": epsilon, "t": t,
            "delta_tau": delta_tau, "D": lin.d_rate, "D_prime": lin.d_prime_rate,
            "T": lin.t_amp, "chi": lin.chi, "chi_self_consistent": ex.chi,
        },
    )
