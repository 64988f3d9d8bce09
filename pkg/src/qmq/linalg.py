"""Small dense complex linear algebra.

Vectorization convention (used everywhere in the package): a density matrix
``rho`` of dimension ``d`` is stacked column by column,

    vec(rho)[i * d + k] = rho[k, i],

so for a qubit with basis (e, g) the vector reads (rho_ee, rho_ge, rho_eg, rho_gg).
With this ordering the transfer matrix of ``rho -> M rho M^dagger`` is
``kron(conj(M), M)`` and its entries obey ``T[i*d + k, j*d + l] = conj(M[i, j]) * M[k, l]``.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

HERMITICITY_TOL = 1e-12
UNITARITY_TOL = 1e-10
ORACLE_TOL = 1e-9

#: hbar in micro-electronvolt times nanosecond
HBAR = 0.6582119569


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise DomainError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def is_hermitian(a, tol: float = HERMITICITY_TOL) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


def hermitian_propagator(h, tau: float, hbar: float = HBAR) -> np.ndarray:
    """Return ``exp(-i h tau / hbar)`` for a Hermitian ``h``.

    Computed from the eigendecomposition of ``h`` so the result is unitary to
    machine precision.

    Raises:
        DomainError: if ``h`` is not square and Hermitian or ``tau`` is not finite.
    """
    h = as_matrix(h)
    if h.shape[0] != h.shape[1]:
        raise DomainError(f"propagator needs a square matrix, got {h.shape}")
    scale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    if not is_hermitian(h, HERMITICITY_TOL * scale):
        raise DomainError("propagator needs a Hermitian generator")
    if not np.isfinite(tau):
        raise DomainError("propagation time must be finite")
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * (tau / hbar))) @ v.conj().T


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def vec(rho) -> np.ndarray:
    """Column-stacked vectorization of a square matrix."""
    rho = as_matrix(rho)
    return rho.reshape(-1, order="F")


def unvec(v, d: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if d is None:
        d = int(round(np.sqrt(v.shape[-1])))
    if d * d != v.shape[-1]:
        raise DomainError(f"vector of length {v.shape[-1]} is not a vectorized square matrix")
    return np.swapaxes(v.reshape(v.shape[:-1] + (d, d)), -1, -2)


def trace_vector(d: int) -> np.ndarray:
    """Row vector ``w`` with ``w @ vec(rho) == trace(rho)``."""
    w = np.zeros(d * d)
    w[np.arange(d) * (d + 1)] = 1.0
    return w


def transfer_matrix(m) -> np.ndarray:
    """Transfer matrix of ``rho -> m rho m^dagger`` acting on ``vec(rho)``."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DomainError(f"transfer matrix needs a square operator, got {m.shape}")
    return np.kron(m.conj(), m)


def apply_transfer(upsilon, rho) -> np.ndarray:
    rho = as_matrix(rho)
    return unvec(np.asarray(upsilon) @ vec(rho), rho.shape[0])


def projector(state) -> np.ndarray:
    psi = np.asarray(state, dtype=complex).reshape(-1)
    return np.outer(psi, psi.conj())


def purity(rho) -> float:
    rho = as_matrix(rho)
    return float(np.real(np.trace(rho @ rho)))


def choi_matrix(upsilon, d: int) -> np.ndarray:
    """Choi matrix ``sum_jl |j><l| (x) E(|j><l|)`` of a transfer matrix."""
    upsilon = np.asarray(upsilon)
    choi = np.zeros((d * d, d * d), dtype=complex)
    for j in range(d):
        for l in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[j, l] = 1.0
            out = unvec(upsilon @ vec(e), d)
            choi[j * d:(j + 1) * d, l * d:(l + 1) * d] = out
    return choi
