"""g-tensor geometry of the spin-charge coupling.

For a field ``B`` the static Zeeman vector of the right dot is ``mu_B g B`` and
the sensor modulates it by ``Delta = mu_B g' B / 2``. The component of
``Delta`` perpendicular to ``g B`` drives readout-induced leakage; it vanishes
when ``g B`` and ``g' B`` are parallel, i.e. along the real right
eigenvectors of ``g^-1 g'``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError
from .models import MU_B

REAL_TOL = 1e-9
DEGENERATE_TOL = 1e-9
NEAR_REAL_TOL = 1e-6


@dataclass(frozen=True)
class GTensorPair:
    g: np.ndarray
    g_prime: np.ndarray

    def __post_init__(self) -> None:
        g = np.asarray(self.g, dtype=float)
        gp = np.asarray(self.g_prime, dtype=float)
        if g.shape != (3, 3) or gp.shape != (3, 3):
            raise DomainError("g-tensors must be 3x3")
        if abs(np.linalg.det(g)) <= 1e-9:
            raise DomainError("g-tensor must be invertible")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "g_prime", gp)


@dataclass(frozen=True)
class FieldConfig:
    direction: np.ndarray
    magnitude: float = 1.0

    def __post_init__(self) -> None:
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise DomainError("field direction must be a unit 3-vector")
        object.__setattr__(self, "direction", d)

    @classmethod
    def from_angles(cls, theta_deg: float, phi_deg: float, magnitude: float = 1.0) -> FieldConfig:
        return cls(unit_vector(theta_deg, phi_deg), magnitude)

    @property
    def vector(self) -> np.ndarray:
        return self.magnitude * self.direction


def unit_vector(theta_deg, phi_deg) -> np.ndarray:
    th, ph = np.radians(theta_deg), np.radians(phi_deg)
    v = np.stack(
        [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1
    )
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def coupling_vector(pair: GTensorPair, field: FieldConfig) -> np.ndarray:
    """``Delta = mu_B g' B / 2`` in ueV."""
    return 0.5 * MU_B * pair.g_prime @ field.vector


@dataclass(frozen=True)
class DeltaDecomposition:
    delta_z: float
    delta_x: float
    zeeman_energy: float

    def __iter__(self):
        return iter((self.delta_z, self.delta_x, self.zeeman_energy))


def decompose_delta(pair: GTensorPair, field: FieldConfig) -> DeltaDecomposition:
    """Split ``Delta`` along and across the static Zeeman axis ``g B / |g B|``.

    ``zeeman_energy`` is the full splitting ``mu_B |g B|``; the spin model
    coefficient in the Pauli convention is half of it (see
    :func:`zeeman_coefficient`).
    """
    gb = pair.g @ field.vector
    norm = float(np.linalg.norm(gb))
    if norm == 0.0:
        raise DomainError("static Zeeman axis is undefined for |g B| = 0")
    axis = gb / norm
    delta = coupling_vector(pair, field)
    dz = float(delta @ axis)
    dx = float(np.linalg.norm(delta - dz * axis))
    return DeltaDecomposition(dz, dx, MU_B * norm)


def zeeman_coefficient(splitting: float, convention: str = "pauli") -> float:
    """Coefficient of ``n_up - n_down`` in the spin model for a given splitting."""
    if convention == "pauli":
        return 0.5 * splitting
    if convention == "half":
        return splitting
    raise DomainError(f"unknown Zeeman convention {convention!r}")


# --- 3x3 eigenproblem -------------------------------------------------------------


def characteristic_coefficients(a: np.ndarray) -> tuple[float, float, float]:
    """``(c2, c1, c0)`` of ``det(lambda I - a) = lambda^3 + c2 lambda^2 + c1 lambda + c0``."""
    tr = float(np.trace(a))
    minors = (
        a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        + a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
        + a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
    )
    return -tr, float(minors), -float(np.linalg.det(a))


def cubic_discriminant(c2: float, c1: float, c0: float) -> float:
    """Discriminant of the monic cubic; positive means three distinct real roots."""
    return (
        18 * c2 * c1 * c0 - 4 * c2**3 * c0 + c2**2 * c1**2 - 4 * c1**3 - 27 * c0**2
    )


def cubic_roots(c2: float, c1: float, c0: float) -> np.ndarray:
    """Roots of ``x^3 + c2 x^2 + c1 x + c0`` by Cardano's method (complex array)."""
    shift = c2 / 3.0
    p = c1 - c2**2 / 3.0
    q = 2.0 * c2**3 / 27.0 - c2 * c1 / 3.0 + c0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    scale = max(abs(p), abs(q), 1e-300)
    if disc < -1e-15 * scale**2 and p < 0:
        # three real roots, trigonometric form
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = min(max(3.0 * q / (p * r), -1.0), 1.0)
        phi = math.acos(arg) / 3.0
        ys = [r * math.cos(phi - 2.0 * math.pi * k / 3.0) for k in range(3)]
        roots = np.array(ys, dtype=complex)
    else:
        sq = math.sqrt(max(disc, 0.0))
        u = np.cbrt(-q / 2.0 + sq)
        v = np.cbrt(-q / 2.0 - sq)
        w = complex(-0.5, math.sqrt(3.0) / 2.0)
        roots = np.array([u + v, u * w + v * w.conjugate(), u * w.conjugate() + v * w])
    roots = roots - shift
    # Newton polish
    for _ in range(3):
        f = ((roots + c2) * roots + c1) * roots + c0
        df = (3.0 * roots + 2.0 * c2) * roots + c1
        ok = np.abs(df) > 1e-14 * max(1.0, abs(c1))
        roots = np.where(ok, roots - f / np.where(ok, df, 1.0), roots)
    return roots


def null_vector(m: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, int]:
    """Unit vector in the (approximate) null space of a 3x3 matrix and its numerical rank.

    Gaussian elimination with full pivoting; the smallest pivot is treated as zero.
    """
    a = np.array(m, dtype=float)
    scale = max(float(np.max(np.abs(a))), 1e-300)
    cols = list(range(3))
    rank = 0
    for k in range(3):
        sub = np.abs(a[k:, k:])
        i, j = np.unravel_index(int(np.argmax(sub)), sub.shape)
        if sub[i, j] <= tol * scale:
            break
        i += k
        j += k
        a[[k, i]] = a[[i, k]]
        a[:, [k, j]] = a[:, [j, k]]
        cols[k], cols[j] = cols[j], cols[k]
        for r in range(k + 1, 3):
            a[r] -= a[r, k] / a[k, k] * a[k]
        rank += 1
    if rank == 3:
        rank = 2  # caller guarantees a (near) singular matrix; drop the last pivot
    y = np.zeros(3)
    y[rank] = 1.0
    for k in range(rank - 1, -1, -1):
        y[k] = -(a[k, k + 1 :] @ y[k + 1 :]) / a[k, k]
    x = np.zeros(3)
    x[cols] = y
    return x / np.linalg.norm(x), rank


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return (v if v[k] > 0 else -v) + 0.0


@dataclass(frozen=True)
class SweetSpots:
    """Real eigenpairs of ``g^-1 g'`` sorted by descending eigenvalue.

    ``degenerate`` marks ``g^-1 g' = alpha I`` (every direction is a sweet
    spot); ``note`` reports repeated or defective eigenvalues.
    """

    pairs: list[tuple[np.ndarray, float]]
    degenerate: bool = False
    note: str = ""
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    @property
    def recommended(self) -> tuple[np.ndarray, float]:
        return self.pairs[0]


def sweet_spot_directions(pair: GTensorPair) -> SweetSpots:
    """Field directions along which ``g B`` is parallel to ``g' B``."""
    a = np.linalg.solve(pair.g, pair.g_prime)
    c2, c1, c0 = characteristic_coefficients(a)
    lam = cubic_roots(c2, c1, c0)
    lam_max = float(np.max(np.abs(lam)))
    scale = max(lam_max, float(np.max(np.abs(a))), 1e-300)
    alpha = float(np.trace(a)) / 3.0
    if np.max(np.abs(a - alpha * np.eye(3))) <= DEGENERATE_TOL * scale:
        pairs = [(np.eye(3)[k], alpha) for k in range(3)]
        return SweetSpots(pairs, True, "g' is proportional to g: every direction is a sweet spot", lam)
    real = np.real(lam[np.abs(lam.imag) < REAL_TOL * max(lam_max, 1e-300)])
    # a repeated real root comes out of the cubic as a pair split by ~sqrt(eps);
    # accept such a pair if a - Re(lambda) I is numerically singular
    near = lam[(np.abs(lam.imag) >= REAL_TOL * max(lam_max, 1e-300)) & (np.abs(lam.imag) < NEAR_REAL_TOL * scale)]
    for value in np.unique(np.round(near.real, 12)):
        if np.linalg.svd(a - value * np.eye(3), compute_uv=False)[-1] <= 1e-7 * scale:
            real = np.concatenate([real, [value, value]])
    real = np.sort(real)[::-1]
    pairs: list[tuple[np.ndarray, float]] = []
    notes = []
    i = 0
    while i < len(real):
        j = i
        while j + 1 < len(real) and abs(real[j + 1] - real[i]) <= 1e-7 * scale:
            j += 1
        value = float(np.mean(real[i : j + 1]))
        mult = j - i + 1
        m = a - value * np.eye(3)
        v, rank = null_vector(m, tol=1e-7 if mult > 1 else 1e-12)
        if mult > 1:
            geo = 3 - rank
            notes.append(
                f"eigenvalue {value:.6g} has algebraic multiplicity {mult}, geometric {geo}"
                + (" (defective)" if geo < mult else "")
            )
            if geo >= 2:
                # two-dimensional eigenspace: report an orthonormal basis of it
                _, _, vt = np.linalg.svd(m)
                for row in vt[-geo:]:
                    pairs.append((_canonical_sign(row), value))
                i = j + 1
                continue
        pairs.append((_canonical_sign(v), value))
        i = j + 1
    return SweetSpots(pairs, False, "; ".join(notes), lam)


# --- direction maps ---------------------------------------------------------------


@dataclass(frozen=True)
class DirectionMap:
    theta_deg: np.ndarray
    phi_deg: np.ndarray
    delta_x_norm: np.ndarray
    delta_z_norm: np.ndarray
    delta_x: np.ndarray
    delta_z: np.ndarray
    zeeman: np.ndarray

    COLUMNS = (
        "theta_deg", "phi_deg", "delta_x_norm", "delta_z_norm",
        "delta_x_ueV", "delta_z_ueV", "zeeman_ueV",
    )

    def rows(self):
        arrays = (
            self.theta_deg, self.phi_deg, self.delta_x_norm, self.delta_z_norm,
            self.delta_x, self.delta_z, self.zeeman,
        )
        return zip(*(a.ravel() for a in arrays))

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.rows():
                w.writerow([f"{x:.12g}" for x in row])
        return path


def decompose_many(pair: GTensorPair, directions: np.ndarray, magnitude: float = 1.0):
    """Vectorized decomposition for an array of unit directions ``(..., 3)``."""
    b = magnitude * np.asarray(directions, dtype=float)
    gb = b @ pair.g.T
    norm = np.linalg.norm(gb, axis=-1)
    axis = gb / norm[..., None]
    delta = 0.5 * MU_B * (b @ pair.g_prime.T)
    dz = np.sum(delta * axis, axis=-1)
    dx = np.linalg.norm(delta - dz[..., None] * axis, axis=-1)
    mag = np.linalg.norm(delta, axis=-1)
    return dz, dx, mag, MU_B * norm


def direction_sweep(
    pair: GTensorPair, grid: tuple[int, int] = (181, 360), magnitude: float = 1.0
) -> DirectionMap:
    """Normalized and raw ``Delta_x``, ``Delta_z`` on a (theta, phi) grid.

    ``theta`` spans 0..180 degrees inclusive and ``phi`` 0..360 exclusive.
    Directions where ``Delta`` vanishes get NaN normalized values.
    """
    n_theta, n_phi = grid
    if n_theta < 2 or n_phi < 2:
        raise DomainError("direction grid must be at least 2x2")
    theta = np.linspace(0.0, 180.0, n_theta)
    phi = np.arange(n_phi) * (360.0 / n_phi)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    dz, dx, mag, zeeman = decompose_many(pair, unit_vector(th, ph), magnitude)
    with np.errstate(invalid="ignore", divide="ignore"):
        dxn = np.where(mag > 0, dx / mag, np.nan)
        dzn = np.where(mag > 0, dz / mag, np.nan)
    return DirectionMap(th, ph, np.clip(dxn, 0.0, 1.0), np.clip(dzn, -1.0, 1.0), dx, dz, zeeman)


def read_pair_csv(path) -> GTensorPair:
    """Read a pair stored as 6 rows of 3 numbers: ``g`` then ``g'`` (``#`` comments allowed)."""
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            vals = [float(x) for x in line.replace(";", ",").split(",") if x.strip()]
            rows.append(vals)
    arr = np.array(rows, dtype=float)
    if arr.shape != (6, 3):
        raise DomainError(f"g-tensor file must hold 6 rows of 3 values, got shape {arr.shape}")
    return GTensorPair(arr[:3], arr[3:])


def synthetic_hole_spin_pair() -> GTensorPair:
    """A synthetic pair for demos with exactly one real eigenpair of ``g^-1 g'``.

    Not measured data: ``g`` is a mildly anisotropic hole-spin-like tensor and
    ``g'`` adds a rotation-like modulation producing a complex eigenvalue pair.
    """
    g = np.array([[1.60, 0.08, 0.02], [0.05, 1.85, 0.10], [0.03, 0.12, 2.20]])
    a = np.array([[0.03, -0.05, 0.0], [0.05, 0.03, 0.0], [0.0, 0.0, 0.08]])
    c, s = math.cos(0.4), math.sin(0.4)
    q = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return GTensorPair(g, g @ (q @ a @ q.T))
