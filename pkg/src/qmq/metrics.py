"""Readout benchmarks (infidelity, mixedness, leakage) and rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.special import erfcinv, ndtr

from . import engine
from .errors import DomainError, FitDomainError, UndefinedConditionalError
from .linalg import projector, trace_vector, unvec, vec
from .models import ReadoutModel

CONDITIONAL_FLOOR = 1e-15


def infidelity(upsilon_e, upsilon_g, state_e, state_g) -> float:
    """``1 - (Tr M_e[|e><e|] + Tr M_g[|g><g|]) / 2``."""
    upsilon_e = np.asarray(upsilon_e)
    d = math.isqrt(upsilon_e.shape[0])
    w = trace_vector(d)
    p_ee = np.real(w @ upsilon_e @ vec(projector(state_e)))
    p_gg = np.real(w @ np.asarray(upsilon_g) @ vec(projector(state_g)))
    return float(1.0 - 0.5 * (p_ee + p_gg))


def post_measurement_state(upsilon_r, rho_pre) -> np.ndarray:
    """Normalized conditional state ``M_r[rho] / Tr M_r[rho]``."""
    rho_pre = np.asarray(rho_pre, dtype=complex)
    out = unvec(np.asarray(upsilon_r) @ vec(rho_pre), rho_pre.shape[0])
    return _normalize(out)


def _normalize(rho: np.ndarray) -> np.ndarray:
    p = float(np.real(np.trace(rho)))
    if not p > CONDITIONAL_FLOOR:
        raise UndefinedConditionalError(
            f"outcome probability {p:.3e} too small to condition on"
        )
    return rho / p


def _mixedness_of(rho: np.ndarray) -> float:
    return float(1.0 - np.real(np.vdot(rho.conj().T, rho)))


def mixedness(upsilon_r, rho_pre) -> float:
    """``1 - Tr rho_post^2`` of the conditional state for outcome ``r``."""
    return _mixedness_of(post_measurement_state(upsilon_r, rho_pre))


def _check_projector(p: np.ndarray) -> None:
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise DomainError("leak projector must be a square matrix")
    if np.max(np.abs(p - p.conj().T)) > 1e-12 or np.max(np.abs(p @ p - p)) > 1e-12:
        raise DomainError("leak projector must be Hermitian and idempotent")


def leakage(upsilon_g, upsilon_e, rho_pre, leak_projector) -> float:
    """``Tr(P_leak M[rho])`` with ``M = M_g + M_e`` the unconditional operation."""
    p = np.asarray(leak_projector, dtype=complex)
    _check_projector(p)
    rho = unvec(
        (np.asarray(upsilon_g) + np.asarray(upsilon_e)) @ vec(np.asarray(rho_pre, dtype=complex)),
        p.shape[0],
    )
    return float(np.real(np.trace(p @ rho)))


# --- fits ---------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    rate: float
    residual: float
    window: tuple[float, float]
    n_points: int


def _loglinear(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    a = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(a, np.log(y), rcond=None)
    resid = np.log(y) - a @ coef
    return float(-coef[0]), float(np.sqrt(np.mean(resid**2)))


def fit_decay_rate(
    times, values, window: tuple[float, float] | None = (0.2, 2.0), max_iter: int = 20
) -> RateFit:
    """Exponential decay rate from a log-linear least-squares fit.

    With ``window=(a, b)`` the fit is restricted iteratively to
    ``a / rate <= t <= b / rate``, which avoids the start-up transient and the
    saturated tail. Falls back to all samples if the window holds fewer than 5.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.size < 5:
        raise FitDomainError("need at least 5 samples of equal length")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise FitDomainError("decay fit needs strictly positive values")
    rate, res = _loglinear(t, y)
    lo, hi = float(t.min()), float(t.max())
    used = t.size
    if window is not None:
        for _ in range(max_iter):
            if not rate > 0:
                break
            sel = (t >= window[0] / rate) & (t <= window[1] / rate)
            if sel.sum() < 5:
                break
            new_rate, new_res = _loglinear(t[sel], y[sel])
            lo, hi, used = window[0] / rate, window[1] / rate, int(sel.sum())
            converged = abs(new_rate - rate) <= 1e-10 * abs(rate)
            rate, res = new_rate, new_res
            if converged:
                break
    return RateFit(max(rate, 0.0), res, (lo, hi), used)


def _erfc_model(rate: float, t: np.ndarray) -> np.ndarray:
    return 1.0 - ndtr(np.sqrt(2.0 * rate * t))


def fit_measurement_rate(times, infidelities) -> RateFit:
    """One-parameter least-squares fit of ``1 - Phi(sqrt(2 Gamma_m t))``."""
    t = np.asarray(times, dtype=float)
    f = np.asarray(infidelities, dtype=float)
    if t.shape != f.shape or t.size < 2:
        raise FitDomainError("need at least two samples of equal length")
    if np.any(f <= 0) or np.any(f > 0.5 + 1e-12) or np.any(t < 0):
        raise FitDomainError("infidelities must lie in (0, 0.5] at non-negative times")
    informative = (f < 0.5 - 1e-12) & (t > 0)
    if informative.sum() < 1:
        raise FitDomainError("series carries no information about the rate")
    # 1 - Phi(x) = erfc(x / sqrt 2) / 2  =>  Gamma = erfcinv(2 f)^2 / t
    guesses = erfcinv(2.0 * f[informative]) ** 2 / t[informative]
    x0 = float(np.median(guesses))
    sol = least_squares(
        lambda g: _erfc_model(g[0] * x0, t) - f,
        x0=[1.0],
        bounds=([0.0], [np.inf]),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    rate = float(sol.x[0] * x0)
    res = float(np.sqrt(np.mean(sol.fun**2)))
    return RateFit(rate, res, (float(t.min()), float(t.max())), int(t.size))


# --- series drivers -------------------------------------------------------------


@dataclass
class BenchmarkSeries:
    """Benchmarks sampled at a set of integration times ``n_steps * delta_tau``."""

    n_steps: np.ndarray
    integration_times: np.ndarray
    infidelity: np.ndarray
    k_critical: np.ndarray
    mixedness_by_outcome: dict[str, np.ndarray] = field(default_factory=dict)
    leakage: np.ndarray | None = None
    population_differences: np.ndarray | None = None
    trace_drift: float = 0.0

    def __post_init__(self) -> None:
        n = len(self.n_steps)
        arrays = [self.integration_times, self.infidelity, self.k_critical]
        arrays += list(self.mixedness_by_outcome.values())
        arrays += [a for a in (self.leakage, self.population_differences) if a is not None]
        if any(len(a) != n for a in arrays):
            raise DomainError("benchmark arrays must share one length")


@dataclass(frozen=True)
class FittedRates:
    gamma_m: float | None = None
    gamma_rel: float | None = None
    gamma_leak: float | None = None
    fit_residuals: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for r in (self.gamma_m, self.gamma_rel, self.gamma_leak):
            if r is not None and r < 0:
                raise DomainError("fitted rates must be non-negative")


def _conditional_states(step, rhos, n_values, workers, max_n, streaming):
    if streaming:
        yield from engine.propagate_states(step, rhos, n_values, workers=workers, max_n=max_n)
        return
    x0 = np.stack([vec(r) for r in rhos])
    for ch in engine.iter_count_resolved(step, n_values, workers=workers, max_n=max_n):
        yield ch.n_steps, np.einsum("kij,mj->kmi", ch.channels, x0)


def conditional_series(
    model: ReadoutModel,
    n_values: Iterable[int],
    rho_pre=None,
    workers: int = 1,
    max_n: int = engine.DEFAULT_MAX_N,
    streaming: bool = True,
) -> BenchmarkSeries:
    """Infidelity, critical ratio and (optionally) mixedness versus step count.

    In streaming mode only the count-conditioned states of ``|e>``, ``|g>``
    and ``rho_pre`` are propagated, so memory stays at ``O(N d^2)``. With
    ``streaming=False`` the full channel history is built instead, which costs
    ``O(N d^4)`` memory and is refused above the engine's cap.
    """
    step = engine.step_operators(model.hamiltonian, model.delta_tau)
    d = model.dim
    rhos = [projector(model.state_e), projector(model.state_g)]
    if rho_pre is not None:
        rhos.append(np.asarray(rho_pre, dtype=complex))
    rhos = np.asarray(rhos, dtype=complex)
    ns, infid, kc, drift = [], [], [], 0.0
    mix = {"e": [], "g": []}
    for n, x in _conditional_states(step, rhos, n_values, workers, max_n, streaming):
        if n == 0:
            raise DomainError("benchmark series start at N >= 1")
        probs = engine.probabilities_from_states(x, d)  # (n+1, m)
        drift = max(drift, float(np.max(np.abs(probs.sum(axis=0) - 1.0))))
        rule = engine.critical_ratio(probs[:, 0], probs[:, 1])
        mask = rule.e_mask()
        ns.append(n)
        kc.append(rule.k_critical)
        infid.append(1.0 - 0.5 * (probs[mask, 0].sum() + probs[~mask, 1].sum()))
        if rho_pre is not None:
            for label, sel in (("e", mask), ("g", ~mask)):
                rho = unvec(x[sel, 2].sum(axis=0), d)
                try:
                    mix[label].append(_mixedness_of(_normalize(rho)))
                except UndefinedConditionalError:
                    mix[label].append(float("nan"))
    ns_arr = np.array(ns)
    return BenchmarkSeries(
        n_steps=ns_arr,
        integration_times=ns_arr * model.delta_tau,
        infidelity=np.array(infid),
        k_critical=np.array(kc),
        mixedness_by_outcome={k: np.array(v) for k, v in mix.items()} if rho_pre is not None else {},
        trace_drift=drift,
    )


def leakage_series(model: ReadoutModel, rho_pre, n_values: Iterable[int]) -> np.ndarray:
    """Leakage of the unconditional operation (independent of the inference rule)."""
    if model.leak_projector is None:
        raise DomainError(f"model {model.name!r} has no leak projector")
    step = engine.step_operators(model.hamiltonian, model.delta_tau)
    states = engine.unconditional_states(step, rho_pre, n_values)
    p = model.leak_projector
    return np.array([float(np.real(np.trace(p @ states[n]))) for n in sorted(states)])


def population_difference_series(
    model: ReadoutModel, n_values: Iterable[int], rho0=None
) -> np.ndarray:
    """``<e|rho|e> - <g|rho|g>`` of the unconditionally evolved state (default ``rho0 = |e><e|``)."""
    step = engine.step_operators(model.hamiltonian, model.delta_tau)
    if rho0 is None:
        rho0 = projector(model.state_e)
    states = engine.unconditional_states(step, rho0, n_values)
    pe, pg = projector(model.state_e), projector(model.state_g)
    return np.array(
        [float(np.real(np.trace((pe - pg) @ states[n]))) for n in sorted(states)]
    )


def fit_relaxation(
    model: ReadoutModel, rate_guess: float, span: float = 3.0, samples: int = 120
) -> RateFit:
    """Fit the decay of the unconditional population difference starting in ``|e>``.

    Samples are spread linearly up to ``span / rate_guess``.
    """
    if not rate_guess > 0:
        raise DomainError("rate guess must be positive")
    n_max = max(int(span / (rate_guess * model.delta_tau)), samples)
    n_values = np.unique(np.linspace(1, n_max, samples).astype(int))
    diff = population_difference_series(model, n_values)
    return fit_decay_rate(n_values * model.delta_tau, diff)


def fit_measurement_rate_series(series: BenchmarkSeries) -> RateFit:
    sel = (series.infidelity > 0) & (series.infidelity <= 0.5)
    return fit_measurement_rate(series.integration_times[sel], series.infidelity[sel])


def interior_minimum(times: Sequence[float], values: Sequence[float]) -> tuple[float, float] | None:
    """Location and value of an interior minimum, refined by a parabola through 3 points."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    i = int(np.argmin(v))
    if i == 0 or i == len(v) - 1:
        return None
    x = np.log(t[i - 1 : i + 2])
    c = np.polyfit(x, v[i - 1 : i + 2], 2)
    if c[0] <= 0:
        return float(t[i]), float(v[i])
    xm = -c[1] / (2 * c[0])
    return float(math.exp(xm)), float(np.polyval(c, xm))
