"""Leakage-detection experiment for a spin qubit read out by Pauli blockade.

Labels: outcome ``0`` is the (1,1) charge configuration (blockaded, high
sensor transmission), outcome ``1`` is (0,2). Spin states are written
``"du"`` for left down, right up, and so on.

The experiment: prepare ``dd``, read out (round 1), convert back, apply X to
both spins, read out again (round 2). Without errors the outcome pair is
(0, 0); a leakage event ``dd -> du`` during round 1 turns it into (0, 1).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import engine
from .errors import DomainError
from .linalg import projector, trace_vector, vec
from .metrics import leakage as leakage_metric
from .models import DD, DU, S02, S20, UD, UU, SpinQubitParams, spin_readout_model

FIRST_ORDER_WARN = 0.2
ROUNDOFF = 1e-12


@dataclass(frozen=True)
class ErrorBudget:
    """First-order error model: leakage, inference errors and initialization errors.

    ``eps_up`` is the probability of reading (0,2) for a (1,1) state,
    ``eps_down`` the reverse. The prepared ``du`` state is the mixture
    ``(1 - q1 - q2) du + q1 dd + q2 ud``.
    """

    leakage_L: float = 0.0
    eps_up: float = 0.0
    eps_down: float = 0.0
    q1: float = 0.0
    q2: float = 0.0
    clipped: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for name in ("leakage_L", "eps_up", "eps_down", "q1", "q2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name}={v} is not a probability")
            if v > FIRST_ORDER_WARN:
                warnings.warn(
                    f"{name}={v:.3g} is large for a first-order error model", stacklevel=3
                )

    def as_dict(self) -> dict:
        d = asdict(self)
        d["clipped"] = list(self.clipped)
        return d


@dataclass(frozen=True)
class ExperimentProbabilities:
    p00: float
    p01: float
    p10: float
    p11: float
    p0_du: float
    p0_ud: float

    def __iter__(self):
        return iter((self.p00, self.p01, self.p10, self.p11, self.p0_du, self.p0_ud))

    def as_dict(self) -> dict:
        return asdict(self)


def experiment_probabilities(b: ErrorBudget) -> ExperimentProbabilities:
    """Outcome probabilities of the three experiments to first order in the errors.

    ``p0_du`` and ``p0_ud`` belong to the single-round experiments on the
    prepared ``du`` and ``ud`` states.
    """
    p01 = b.leakage_L + b.eps_up
    p10 = b.eps_up
    p11 = b.q1
    return ExperimentProbabilities(
        1.0 - p01 - p10 - p11, p01, p10, p11, b.eps_down + b.q1 + b.q2, b.eps_up + b.q2
    )


def estimate_error_budget(observed) -> ErrorBudget:
    """Invert :func:`experiment_probabilities`; negative estimates are clipped to 0 and flagged."""
    obs = ExperimentProbabilities(*[float(x) for x in observed])
    for v in obs:
        if not 0.0 <= v <= 1.0:
            raise DomainError("observed frequencies must lie in [0, 1]")
    raw = {"leakage_L": obs.p01 - obs.p10, "eps_up": obs.p10, "q1": obs.p11}
    raw["q2"] = obs.p0_ud - raw["eps_up"]
    raw["eps_down"] = obs.p0_du - raw["q1"] - raw["q2"]
    # round-off below ROUNDOFF is not a clipping event
    clipped = tuple(k for k in ("leakage_L", "eps_up", "eps_down", "q1", "q2") if raw[k] < -ROUNDOFF)
    vals = {k: min(max(v, 0.0), 1.0) for k, v in raw.items()}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ErrorBudget(clipped=clipped, **vals)


# --- state-transfer maps -------------------------------------------------------------

#: ideal spin-to-charge conversion, operation-point label -> readout-point label
SPIN_TO_CHARGE = {S20: S20, S02: UD, UD: DU, DU: S02, UU: UU, DD: DD}
#: X on both spins, acting on operation-point (1,1) labels
X_BOTH = {UU: DD, DD: UU, UD: DU, DU: UD, S20: S20, S02: S02}


def permutation_matrix(mapping: dict[int, int], d: int = 6) -> np.ndarray:
    p = np.zeros((d, d))
    for src, dst in mapping.items():
        p[dst, src] = 1.0
    if not np.allclose(p @ p.T, np.eye(d)):
        raise DomainError("mapping is not a permutation")
    return p


def conversion_matrix() -> np.ndarray:
    return permutation_matrix(SPIN_TO_CHARGE)


def x_both_matrix() -> np.ndarray:
    return permutation_matrix(X_BOTH)


def prepared_state(label: str, q1: float = 0.0, q2: float = 0.0) -> np.ndarray:
    """Operation-point density matrix of a prepared spin state with initialization errors.

    The ``du`` preparation is ``(1 - q1 - q2) du + q1 dd + q2 ud``; ``dd`` and
    ``ud`` are obtained from it by X on the right spin and X on both spins.
    """
    base = np.diag(np.zeros(6))
    base[DU, DU] = 1.0 - q1 - q2
    base[DD, DD] = q1
    base[UD, UD] = q2
    if label == "du":
        return base.astype(complex)
    if label == "dd":
        x_r = permutation_matrix({DU: DD, DD: DU, UD: UU, UU: UD, S20: S20, S02: S02})
    elif label == "ud":
        x_r = x_both_matrix()
    else:
        raise DomainError(f"unknown preparation {label!r}")
    return (x_r @ base @ x_r.T).astype(complex)


# --- full-engine simulation -------------------------------------------------------------


@dataclass
class LeakageExperimentResult:
    frequencies: ExperimentProbabilities
    probabilities: ExperimentProbabilities
    estimated_budget: ErrorBudget
    true_leakage: float
    leakage_sigma: float
    n_steps_per_round: int
    shots: int
    seed: int
    k_critical: float
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        f = self.frequencies
        return {
            "p00": f.p00,
            "p01": f.p01,
            "p10": f.p10,
            "p11": f.p11,
            "p0_du": f.p0_du,
            "p0_ud": f.p0_ud,
            "estimated_budget": self.estimated_budget.as_dict(),
            "true_leakage": self.true_leakage,
            "leakage_sigma": self.leakage_sigma,
            "exact_probabilities": self.probabilities.as_dict(),
            "n_steps_per_round": self.n_steps_per_round,
            "shots": self.shots,
            "seed": self.seed,
            "k_critical": self.k_critical,
            **self.extras,
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")
        return path


def simulate_leakage_experiment(
    spin_params: SpinQubitParams,
    n_steps_per_round: int,
    shots: int,
    seed: int,
    q1: float = 0.0,
    q2: float = 0.0,
    workers: int = 1,
) -> LeakageExperimentResult:
    """Sample the leakage-detection experiment and the two auxiliary experiments.

    Round 1 draws the transmission count from the engine's count distribution
    and keeps the count-conditioned state, so the second round sees the actual
    post-measurement state rather than a bit-conditioned one.

    The auxiliary frequencies are reported in the slots of the first-order
    model: ``p0_du`` is the frequency of outcome 0 for the prepared ``du``
    state, and ``p0_ud`` is the frequency of outcome 1 for the prepared ``ud``
    state, which is the observable whose first-order value is ``eps_up + q2``.
    """
    if shots < 100:
        warnings.warn("fewer than 100 shots: frequencies are statistically meaningless", stacklevel=2)
    n = int(n_steps_per_round)
    model = spin_readout_model(spin_params)
    step = engine.step_operators(model.hamiltonian, model.delta_tau)
    d = model.dim
    conv = conversion_matrix()
    w = trace_vector(d)

    # rule from the two readout states at this round length
    _, ref = next(
        engine.propagate_states(step, [projector(model.state_e), projector(model.state_g)], [n], workers=workers)
    )
    ref = ref.copy()
    probs = engine.probabilities_from_states(ref, d)
    rule = engine.critical_ratio(probs[:, 0], probs[:, 1])
    zero_mask = rule.e_mask()  # high transmission -> (1,1) -> outcome 0

    # functional giving P(outcome 0) for any readout-point state
    _, fun = next(engine.propagate_functionals(step, w[None, :], [n], workers=workers))
    f0 = fun[zero_mask, 0].sum(axis=0)

    def p_zero(rho_ro: np.ndarray) -> float:
        return float(np.real(f0 @ vec(rho_ro)))

    # round 1 on the prepared dd state
    rho_ro = conv @ prepared_state("dd", q1, q2) @ conv.T
    _, cond = next(engine.propagate_states(step, rho_ro, [n], workers=workers))
    cond = cond[:, 0].copy()  # (n+1, d^2)
    p_k = np.real(cond @ w)
    true_leak = leakage_metric(
        np.zeros((d * d, d * d)),
        engine.unconditional_channel(step, n),
        rho_ro,
        model.leak_projector,
    )
    # back-convert, X on both spins, convert again
    v = conv @ x_both_matrix() @ conv.T
    big_v = np.kron(v, v)  # real permutation, transfer matrix kron(conj(V), V)
    second = cond @ big_v.T
    p0_given_k = np.where(p_k > 0, np.real(second @ f0) / np.where(p_k > 0, p_k, 1.0), 0.0)
    p0_given_k = np.clip(p0_given_k, 0.0, 1.0)

    first0 = zero_mask
    exact = {
        (0, 0): float(np.sum(p_k[first0] * p0_given_k[first0])),
        (0, 1): float(np.sum(p_k[first0] * (1 - p0_given_k[first0]))),
        (1, 0): float(np.sum(p_k[~first0] * p0_given_k[~first0])),
        (1, 1): float(np.sum(p_k[~first0] * (1 - p0_given_k[~first0]))),
    }
    aux_du = conv @ prepared_state("du", q1, q2) @ conv.T
    aux_ud = conv @ prepared_state("ud", q1, q2) @ conv.T
    p0_du = p_zero(aux_du)
    p1_ud = 1.0 - p_zero(aux_ud)

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    pk = np.clip(p_k, 0.0, None)
    k = rng.choice(n + 1, size=shots, p=pk / pk.sum())
    r1 = np.where(zero_mask[k], 0, 1)
    r2 = np.where(rng.random(shots) < p0_given_k[k], 0, 1)
    counts = np.zeros((2, 2))
    np.add.at(counts, (r1, r2), 1)
    freq = counts / shots
    f_du = rng.binomial(shots, p0_du) / shots
    f_ud = rng.binomial(shots, p1_ud) / shots

    observed = ExperimentProbabilities(freq[0, 0], freq[0, 1], freq[1, 0], freq[1, 1], f_du, f_ud)
    exact_p = ExperimentProbabilities(exact[0, 0], exact[0, 1], exact[1, 0], exact[1, 1], p0_du, p1_ud)
    est = estimate_error_budget(observed)
    # multinomial variance of p01 - p10
    var = (exact_p.p01 + exact_p.p10 - (exact_p.p01 - exact_p.p10) ** 2) / shots
    return LeakageExperimentResult(
        frequencies=observed,
        probabilities=exact_p,
        estimated_budget=est,
        true_leakage=true_leak,
        leakage_sigma=math.sqrt(max(var, 0.0)),
        n_steps_per_round=n,
        shots=int(shots),
        seed=int(seed),
        k_critical=rule.k_critical,
        extras={"delta_tau_ns": model.delta_tau, "round_time_ns": n * model.delta_tau},
    )
