"""Count-resolved evolution of repeatedly measured systems.

After ``N`` meter electrons the record is summarized by the number ``N_t`` of
transmitted ones. The operation belonging to ``N_t`` obeys the Pascal-tree
recursion

    Y[N_t]^(N) = Y0 Y[N_t]^(N-1) + Y1 Y[N_t - 1]^(N-1),

which costs O(N^2) matrix products instead of the 2^N terms of the direct sum.

Rather than carrying whole transfer matrices through the recursion, the
engine propagates a set of probe vectors: vectorized density matrices in the
forward direction, or row functionals (e.g. the trace) in the adjoint
direction. Propagating the ``d^2`` unit vectors reproduces the full channels.
Only the current round is kept in memory.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ConsistencyError, DomainError, ResourceError
from .linalg import hermitian_propagator, trace_vector, transfer_matrix, vec

DEFAULT_MAX_N = 20_000
BRUTE_FORCE_MAX_N = 14
COMPLETENESS_TOL = 1e-8
#: rows of the stacked probe buffer handled by one task; fixed so that the
#: arithmetic (and hence every bit of the result) does not depend on the
#: number of workers
ROW_BLOCK = 4096
#: memory budget for retained channel histories
MAX_CHANNEL_BYTES = 1024**3


@dataclass(frozen=True)
class StepOperators:
    """Single meter-electron operators and their transfer matrices."""

    m0: np.ndarray
    m1: np.ndarray
    upsilon0: np.ndarray
    upsilon1: np.ndarray
    dim: int

    @property
    def unconditional(self) -> np.ndarray:
        return self.upsilon0 + self.upsilon1


def step_operators(h_tot: np.ndarray, delta_tau: float, meter_last: bool = True) -> StepOperators:
    """Extract ``M0 = <.,B|U|.,B>`` and ``M1 = <.,T|U|.,B>`` from ``U = exp(-i H dt / hbar)``.

    ``h_tot`` acts on system (x) meter. With ``meter_last=False`` the meter is
    taken to be the first tensor factor instead.
    """
    if not delta_tau > 0:
        raise DomainError("delta_tau must be positive")
    h_tot = np.asarray(h_tot, dtype=complex)
    if h_tot.ndim != 2 or h_tot.shape[0] != h_tot.shape[1] or h_tot.shape[0] % 2:
        raise DomainError(f"joint Hamiltonian must be square with even dimension, got {h_tot.shape}")
    d = h_tot.shape[0] // 2
    u = hermitian_propagator(h_tot, delta_tau)
    if meter_last:
        u4 = u.reshape(d, 2, d, 2)
        m0, m1 = u4[:, 0, :, 0], u4[:, 1, :, 0]
    else:
        u4 = u.reshape(2, d, 2, d)
        m0, m1 = u4[0, :, 0, :], u4[1, :, 0, :]
    m0, m1 = np.ascontiguousarray(m0), np.ascontiguousarray(m1)
    completeness = m0.conj().T @ m0 + m1.conj().T @ m1
    err = float(np.max(np.abs(completeness - np.eye(d))))
    if err > COMPLETENESS_TOL:
        raise ConsistencyError(
            f"step operators violate completeness by {err:.2e}; check basis ordering"
        )
    return StepOperators(m0, m1, transfer_matrix(m0), transfer_matrix(m1), d)


@dataclass(frozen=True)
class CountResolvedChannels:
    """``channels[N_t]`` is the transfer matrix for ``N_t`` transmissions out of ``n_steps``."""

    n_steps: int
    channels: np.ndarray

    @property
    def dim(self) -> int:
        return math.isqrt(self.channels.shape[-1])

    def total(self) -> np.ndarray:
        return self.channels.sum(axis=0)


# --- probe propagation ------------------------------------------------------


def _gemm_blocks(x: np.ndarray, a: np.ndarray, out: np.ndarray, pool) -> None:
    """``out = x @ a`` computed in fixed row blocks."""
    rows = x.shape[0]
    starts = range(0, rows, ROW_BLOCK)
    if pool is None or rows <= ROW_BLOCK:
        for s in starts:
            np.matmul(x[s : s + ROW_BLOCK], a, out=out[s : s + ROW_BLOCK])
        return

    def job(s):
        np.matmul(x[s : s + ROW_BLOCK], a, out=out[s : s + ROW_BLOCK])

    list(pool.map(job, starts))


def propagate(
    x0: np.ndarray,
    a0: np.ndarray,
    a1: np.ndarray,
    checkpoints: Iterable[int],
    workers: int = 1,
    max_n: int = DEFAULT_MAX_N,
) -> Iterator[tuple[int, np.ndarray]]:
    """Run the count recursion on row vectors.

    The state after ``n`` rounds is an array ``X`` of shape ``(n + 1, m, D)``
    obeying ``X[k]^(n) = X[k]^(n-1) @ a0 + X[k-1]^(n-1) @ a1`` with
    ``X^(0) = x0[None]``. For forward propagation of vectorized states pass
    ``a_r = Y_r.T``; for adjoint functionals pass ``a_r = Y_r``.

    Yields ``(n, X)`` at every requested checkpoint in increasing order. ``X`` is
    a view into an internal buffer and is only valid until the next iteration.
    """
    cps = sorted({int(c) for c in checkpoints})
    if not cps:
        return
    if cps[0] < 0:
        raise DomainError("checkpoints must be non-negative")
    n_max = cps[-1]
    if n_max > max_n:
        raise ResourceError(f"requested N={n_max} exceeds the cap of {max_n}")
    x0 = np.atleast_2d(np.asarray(x0, dtype=complex))
    m, dd = x0.shape
    a0 = np.ascontiguousarray(a0, dtype=complex)
    a1 = np.ascontiguousarray(a1, dtype=complex)
    cur = np.zeros((n_max + 2, m, dd), dtype=complex)
    nxt = np.zeros_like(cur)
    tmp = np.zeros_like(cur)
    cur[0] = x0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        pending = iter(cps)
        target = next(pending)
        n = 0
        while True:
            while target == n:
                yield n, cur[: n + 1]
                target = next(pending, None)
                if target is None:
                    return
            k = n + 1
            flat_cur = cur[:k].reshape(k * m, dd)
            _gemm_blocks(flat_cur, a0, nxt[:k].reshape(k * m, dd), pool)
            nxt[k] = 0.0
            _gemm_blocks(flat_cur, a1, tmp[:k].reshape(k * m, dd), pool)
            nxt[1 : k + 1] += tmp[:k]
            cur, nxt = nxt, cur
            n += 1
    finally:
        if pool is not None:
            pool.shutdown()


def propagate_states(
    step: StepOperators,
    rhos,
    checkpoints: Iterable[int],
    workers: int = 1,
    max_n: int = DEFAULT_MAX_N,
) -> Iterator[tuple[int, np.ndarray]]:
    """Unnormalized count-conditioned states for one or more initial states.

    Yields ``(n, C)`` with ``C[N_t, j]`` the vectorized ``M_{N_t}^(n)[rho_j]``.
    """
    rhos = np.asarray(rhos, dtype=complex)
    if rhos.ndim == 2:
        rhos = rhos[None]
    x0 = np.stack([vec(r) for r in rhos])
    yield from propagate(
        x0, step.upsilon0.T, step.upsilon1.T, checkpoints, workers=workers, max_n=max_n
    )


def propagate_functionals(
    step: StepOperators,
    rows,
    checkpoints: Iterable[int],
    workers: int = 1,
    max_n: int = DEFAULT_MAX_N,
) -> Iterator[tuple[int, np.ndarray]]:
    """Adjoint propagation: ``F[N_t, j] = rows[j] @ Y_{N_t}^(n)``.

    With ``rows = trace_vector(d)`` this gives the functionals whose inner
    product with ``vec(rho)`` is the probability of ``N_t`` transmissions.
    """
    yield from propagate(
        rows, step.upsilon0, step.upsilon1, checkpoints, workers=workers, max_n=max_n
    )


def history_bytes(n: int, dim: int) -> int:
    """Working memory of the full count-resolved channel history at ``n`` steps."""
    return 3 * (n + 2) * dim**4 * 16


def streaming_bytes(n: int, dim: int, probes: int) -> int:
    """Working memory when only ``probes`` vectorized states are propagated."""
    return 3 * (n + 2) * probes * dim**2 * 16


def _check_history_memory(n: int, dim: int) -> None:
    nbytes = history_bytes(n, dim)
    if nbytes > MAX_CHANNEL_BYTES:
        raise ResourceError(
            f"full channel history at N={n} needs ~{nbytes / 1e9:.1f} GB; "
            "use the streaming mode"
        )


def evolve_count_resolved(
    step: StepOperators,
    n: int,
    workers: int = 1,
    max_n: int = DEFAULT_MAX_N,
) -> CountResolvedChannels:
    """All ``n + 1`` count-resolved transfer matrices after ``n`` steps."""
    return next(iter_count_resolved(step, [n], workers=workers, max_n=max_n))


def iter_count_resolved(
    step: StepOperators,
    checkpoints: Iterable[int],
    workers: int = 1,
    max_n: int = DEFAULT_MAX_N,
) -> Iterator[CountResolvedChannels]:
    """Count-resolved channels at each checkpoint (copies, safe to keep)."""
    cps = sorted({int(c) for c in checkpoints})
    if not cps:
        return
    if cps[0] < 1:
        raise DomainError("number of steps must be at least 1")
    if cps[-1] > max_n:
        raise ResourceError(f"requested N={cps[-1]} exceeds the cap of {max_n}")
    dd = step.dim**2
    _check_history_memory(cps[-1], step.dim)
    eye = np.eye(dd, dtype=complex)
    for n, x in propagate(
        eye, step.upsilon0.T, step.upsilon1.T, cps, workers=workers, max_n=max_n
    ):
        # x[k, j, :] is column j of Y_k
        yield CountResolvedChannels(n, np.ascontiguousarray(np.swapaxes(x, 1, 2)))


def brute_force_channels(step: StepOperators, n: int) -> CountResolvedChannels:
    """Enumerate all ``2^n`` bitstrings and group the products by their weight."""
    if n < 1:
        raise DomainError("number of steps must be at least 1")
    if n > BRUTE_FORCE_MAX_N:
        raise ResourceError(f"brute-force enumeration limited to N <= {BRUTE_FORCE_MAX_N}")
    d = step.dim
    ups = (step.upsilon0, step.upsilon1)
    channels = np.zeros((n + 1, d * d, d * d), dtype=complex)
    for bits in itertools.product((0, 1), repeat=n):
        prod = np.eye(d * d, dtype=complex)
        for r in bits:  # first bit acts first
            prod = ups[r] @ prod
        channels[sum(bits)] += prod
    return CountResolvedChannels(n, channels)


def unconditional_channel(step: StepOperators, n: int) -> np.ndarray:
    """``(Y0 + Y1)^n``, the operation when the record is discarded."""
    if n < 0:
        raise DomainError("n must be non-negative")
    return np.linalg.matrix_power(step.unconditional, n)


def unconditional_states(step: StepOperators, rho, n_values: Iterable[int]) -> dict[int, np.ndarray]:
    """Unconditionally evolved density matrices at the requested step counts."""
    wanted = sorted({int(v) for v in n_values})
    d = step.dim
    y = step.unconditional
    v = vec(rho).astype(complex)
    out = {}
    n = 0
    for target in wanted:
        if target > n:
            v = np.linalg.matrix_power(y, target - n) @ v
            n = target
        out[target] = v.reshape(d, d).T.copy()
    return out


# --- outcome distributions and inference -------------------------------------


def outcome_distribution(channels: CountResolvedChannels, rho) -> np.ndarray:
    """``P(N_t) = Tr M_{N_t}[rho]`` for ``N_t = 0..N``."""
    d = channels.dim
    v = vec(np.asarray(rho, dtype=complex))
    if v.shape[0] != d * d:
        raise DomainError("density matrix dimension does not match the channels")
    return np.real(trace_vector(d) @ (channels.channels @ v).T)


def probabilities_from_states(states: np.ndarray, d: int) -> np.ndarray:
    """Traces of stacked vectorized states (last axis of length ``d^2``)."""
    return np.real(states[..., :: d + 1].sum(axis=-1))


@dataclass(frozen=True)
class InferenceRule:
    """Single-threshold rule on the transmission count.

    Outcome ``e`` is inferred iff ``N_t > n_split``; counts at or below the
    split (ties included) give ``g``. ``k_critical = n_split / n_steps``.
    """

    n_steps: int
    n_split: float
    monotone: bool = True

    @property
    def k_critical(self) -> float:
        return min(max(self.n_split / self.n_steps, 0.0), 1.0)

    def e_mask(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) > self.n_split

    def infer(self, n_t) -> np.ndarray:
        return np.asarray(n_t) > self.n_split


def threshold_scan(p_e: np.ndarray, p_g: np.ndarray) -> tuple[int, float]:
    """Best integer threshold ``j`` (``e`` iff ``N_t > j``) by exhaustive fidelity scan."""
    p_e = np.asarray(p_e, dtype=float)
    p_g = np.asarray(p_g, dtype=float)
    # F(j) = sum_{n>j} p_e + sum_{n<=j} p_g for j = -1..N
    tail_e = np.concatenate([[p_e.sum()], p_e.sum() - np.cumsum(p_e)])
    head_g = np.concatenate([[0.0], np.cumsum(p_g)])
    fid = 0.5 * (tail_e + head_g)
    j = int(np.argmax(fid))
    return j - 1, float(fid[j])


def critical_ratio(
    p_e,
    p_g,
    tie_rtol: float = 1e-9,
    floor: float = 1e-14,
) -> InferenceRule:
    """Maximum-likelihood count threshold separating ``e`` (above) from ``g``.

    Counts where both likelihoods are below ``floor`` times the largest one are
    ignored. Ties within ``tie_rtol`` go to ``g``. If the likelihood-ratio test
    is not a single cut, the best single threshold is returned and a warning
    is issued. The fractional part of the split is the linear zero crossing
    of the log-likelihood ratio.
    """
    p_e = np.asarray(p_e, dtype=float)
    p_g = np.asarray(p_g, dtype=float)
    if p_e.shape != p_g.shape or p_e.ndim != 1:
        raise DomainError("distributions must be 1-d arrays of equal length")
    n = p_e.size - 1
    big = np.maximum(p_e, p_g)
    scale = float(big.max(initial=0.0))
    significant = big > floor * scale
    diff = p_e - p_g
    tie = np.abs(diff) <= tie_rtol * big
    ml_e = (diff > 0) & ~tie & significant
    ml_g = ~ml_e & significant
    idx_e = np.flatnonzero(ml_e)
    if idx_e.size == 0:
        return InferenceRule(n, float(n))
    n0 = int(idx_e[0]) - 1
    separable = not np.any(ml_g[n0 + 1 :])
    if not separable:
        warnings.warn(
            "likelihood ratio is not monotone in the count; using the best single threshold",
            stacklevel=2,
        )
        j, _ = threshold_scan(p_e, p_g)
        return InferenceRule(n, float(max(j, 0)), monotone=False)
    if n0 < 0:
        return InferenceRule(n, 0.0)
    frac = 0.5
    if not tie[n0] and min(p_e[n0], p_g[n0], p_e[n0 + 1], p_g[n0 + 1]) > 0:
        l0 = math.log(p_e[n0]) - math.log(p_g[n0])
        l1 = math.log(p_e[n0 + 1]) - math.log(p_g[n0 + 1])
        if l1 > l0:
            frac = min(max(-l0 / (l1 - l0), 0.0), 1.0 - 1e-12)
    elif tie[n0]:
        frac = 0.0
    return InferenceRule(n, n0 + frac)


def aggregate_operations(
    channels: CountResolvedChannels, rule: InferenceRule
) -> tuple[np.ndarray, np.ndarray]:
    """Sum the count channels into ``(Y_g, Y_e)`` according to the rule."""
    if rule.n_steps != channels.n_steps:
        raise DomainError("rule and channels refer to different step counts")
    mask = rule.e_mask()
    return channels.channels[~mask].sum(axis=0), channels.channels[mask].sum(axis=0)


def trace_drift(channels: CountResolvedChannels) -> float:
    """Largest deviation from trace preservation of the summed channels."""
    d = channels.dim
    t = trace_vector(d) @ channels.total()
    return float(np.max(np.abs(t - trace_vector(d))))


def log_checkpoints(n_min: int, n_max: int, count: int = 40) -> list[int]:
    """Integers spaced logarithmically in ``[n_min, n_max]`` (duplicates removed)."""
    if n_min < 1 or n_max < n_min:
        raise DomainError("need 1 <= n_min <= n_max")
    pts = np.unique(np.round(np.geomspace(n_min, n_max, count)).astype(int))
    return [int(p) for p in pts]
