"""Multi-level Hermitian Toeplitz (MLT) matrices stored by their generating lag coefficients.

Entry (m, n) of the realized L_u x L_u matrix is ``coeff(pos[m] - pos[n])`` where ``pos`` are the
row-major multi-indices of the array. Only lexicographically nonnegative lags are stored; the
others follow from Hermitian symmetry coeff(-a) = conj(coeff(a)).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import DimensionVector, multi_indices

RANK_TOL = 1e-7
# corner eigenvalues shrink with the squared spacing of the last-dimension frequencies; the
# threshold sits about three decades above the roundoff floor of an exactly rank-deficient corner
CORNER_RANK_TOL = 1e-12


@lru_cache(maxsize=32)
def _lag_tables(dims: tuple[int, ...]):
    """Flat lag index of every matrix entry and the multiplicity of every lag."""
    pos = multi_indices(dims)
    lag_shape = tuple(2 * n - 1 for n in dims)
    diff = pos[:, None, :] - pos[None, :, :] + (np.array(dims) - 1)
    idx = np.ravel_multi_index(tuple(np.moveaxis(diff, -1, 0)), lag_shape)
    counts = np.bincount(idx.ravel(), minlength=int(np.prod(lag_shape)))
    idx.setflags(write=False)
    counts.setflags(write=False)
    return idx, counts


def lag_shape(dims) -> tuple[int, ...]:
    return tuple(2 * n - 1 for n in DimensionVector.of(dims).dims)


def lag_vectors(dims) -> np.ndarray:
    """(n_lags, d) array of all lag tuples in row-major order over prod(2 L_i - 1)."""
    dims = DimensionVector.of(dims)
    return multi_indices(lag_shape(dims)) - (np.array(dims.dims) - 1)


def lag_counts(dims) -> np.ndarray:
    return _lag_tables(DimensionVector.of(dims).dims)[1]


@dataclass(frozen=True)
class MLTGenerator:
    """Compact MLT matrix: ``coeffs[j]`` is the coefficient of the j-th nonnegative lag.

    Nonnegative lags are the second half (center included) of the row-major full lag grid.
    """

    dims: DimensionVector
    coeffs: np.ndarray

    def __post_init__(self):
        dims = DimensionVector.of(self.dims)
        object.__setattr__(self, "dims", dims)
        coeffs = np.asarray(self.coeffs, dtype=complex).copy()
        n_half = (int(np.prod(lag_shape(dims))) + 1) // 2
        if coeffs.shape != (n_half,):
            raise ValueError(f"expected {n_half} nonnegative-lag coefficients, got {coeffs.shape}")
        coeffs[0] = coeffs[0].real
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def from_full(cls, dims, full: np.ndarray) -> "MLTGenerator":
        """From a full lag array (either shape ``lag_shape`` or flattened), Hermitian part taken."""
        full = np.asarray(full, dtype=complex).ravel()
        herm = 0.5 * (full + full[::-1].conj())
        center = (full.size - 1) // 2
        return cls(DimensionVector.of(dims), herm[center:])

    @classmethod
    def zeros(cls, dims) -> "MLTGenerator":
        n_half = (int(np.prod(lag_shape(dims))) + 1) // 2
        return cls(DimensionVector.of(dims), np.zeros(n_half, dtype=complex))

    @property
    def L_u(self) -> int:
        return self.dims.total()

    def full(self) -> np.ndarray:
        """Flattened coefficients over every lag (row-major over prod(2 L_i - 1))."""
        return np.concatenate([self.coeffs[:0:-1].conj(), self.coeffs])

    def coeff(self, lag) -> complex:
        lag = np.asarray(lag, dtype=int)
        shape = lag_shape(self.dims)
        j = int(np.ravel_multi_index(tuple(lag + np.array(self.dims.dims) - 1), shape))
        return complex(self.full()[j])

    def trace(self) -> float:
        return float(self.coeffs[0].real) * self.L_u

    def realize(self) -> np.ndarray:
        return realize(self)

    def records(self):
        """(lag tuple, re, im) for every stored nonnegative lag."""
        lags = lag_vectors(self.dims)[(lag_vectors(self.dims).shape[0] - 1) // 2:]
        return [(tuple(int(a) for a in lag), float(c.real), float(c.imag))
                for lag, c in zip(lags, self.coeffs)]

    @classmethod
    def from_records(cls, dims, records) -> "MLTGenerator":
        dims = DimensionVector.of(dims)
        shape = lag_shape(dims)
        full = np.zeros(int(np.prod(shape)), dtype=complex)
        off = np.array(dims.dims) - 1
        for lag, re, im in records:
            lag = np.asarray(lag, dtype=int)
            j = np.ravel_multi_index(tuple(lag + off), shape)
            jm = np.ravel_multi_index(tuple(-lag + off), shape)
            full[j] = complex(re, im)
            full[jm] = complex(re, -im)
        return cls.from_full(dims, full)

    def inner(self, other: "MLTGenerator") -> float:
        """Lag-multiplicity weighted inner product; equals the Frobenius product of realizations."""
        w = lag_counts(self.dims)
        return float(np.real(np.sum(w * self.full().conj() * other.full())))


def realize(gen: MLTGenerator) -> np.ndarray:
    idx, _ = _lag_tables(gen.dims.dims)
    return gen.full()[idx]


def project_full(m: np.ndarray, dims) -> np.ndarray:
    """Full lag array of the orthogonal projection of ``m`` onto the MLT subspace."""
    idx, counts = _lag_tables(DimensionVector.of(dims).dims)
    m = np.asarray(m)
    flat = idx.ravel()
    re = np.bincount(flat, weights=m.real.ravel(), minlength=counts.size)
    im = np.bincount(flat, weights=m.imag.ravel(), minlength=counts.size)
    return (re + 1j * im) / counts


def project_to_mlt(m: np.ndarray, dims) -> MLTGenerator:
    """Average of ``m`` over each lag class (orthogonal projection, Hermitian part kept)."""
    dims = DimensionVector.of(dims)
    return MLTGenerator.from_full(dims, project_full(m, dims))


def from_atoms(dims, freqs, weights) -> MLTGenerator:
    """Generator of sum_k w_k u(l_k) u(l_k)^H."""
    dims = DimensionVector.of(dims)
    freqs = np.asarray(freqs, dtype=float).reshape(dims.d, -1)
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    if np.any(weights <= 0):
        raise ValueError("atom weights must be positive")
    lags = lag_vectors(dims)
    half = lags[(lags.shape[0] - 1) // 2:]
    coeffs = np.exp(2j * np.pi * half @ freqs) @ weights / dims.total()
    return MLTGenerator(dims, coeffs)


def upper_left_corner(gen: MLTGenerator, size: int) -> np.ndarray:
    if not 1 <= size <= gen.L_u:
        raise ValueError(f"corner size must be in [1, {gen.L_u}]")
    idx, _ = _lag_tables(gen.dims.dims)
    return gen.full()[idx[:size, :size]]


def numerical_rank(m: np.ndarray, tol: float = RANK_TOL) -> int:
    w = np.linalg.eigvalsh(m)
    top = np.max(np.abs(w)) if w.size else 0.0
    if top == 0:
        return 0
    return int(np.sum(w > tol * top))


def decomposition_admissible(gen: MLTGenerator, tol: float = RANK_TOL, psd_slack: float = 1e-9,
                             corner_tol: float = CORNER_RANK_TOL) -> dict:
    """Whether a unique Vandermonde decomposition is guaranteed (rank and corner-rank test)."""
    t = realize(gen)
    w = np.linalg.eigvalsh(t)
    top = max(np.max(np.abs(w)), np.finfo(float).tiny)
    psd = bool(w[0] >= -psd_slack * top)
    r = int(np.sum(w > tol * top))
    l_d = gen.dims[-1]
    corner = upper_left_corner(gen, l_d)
    wc = np.linalg.eigvalsh(corner)
    corner_rank = int(np.sum(wc > corner_tol * max(wc[-1], np.finfo(float).tiny)))
    admissible = psd and r < gen.L_u and corner_rank == r and r < l_d
    return {"rank": r, "corner_rank": corner_rank, "psd": psd, "admissible": bool(admissible)}
