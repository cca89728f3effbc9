"""Pilot matrices, the measurement operator Q = (P^T kron I_N) A^L and noisy observations."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .channel import complex_normal
from .geometry import SensingMatrix

ALPHABETS = ("bpsk", "qpsk", "gauss", "custom")
DENSE_CACHE_LIMIT = 10**6
KRANK_MAX = 8


@dataclass(frozen=True)
class PilotMatrix:
    entries: np.ndarray
    alphabet: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "entries", np.atleast_2d(np.asarray(self.entries, dtype=complex)))
        if self.alphabet not in ALPHABETS:
            raise ValueError(f"unknown pilot alphabet {self.alphabet!r}")

    @property
    def M(self) -> int:
        return self.entries.shape[0]

    @property
    def P(self) -> int:
        return self.entries.shape[1]

    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.entries))


def generate_pilots(alphabet: str, M: int, P: int, rng_seed=None) -> PilotMatrix:
    """M x P pilot block with i.i.d. symbols from ``alphabet`` (unnormalized constellations)."""
    if M < 1 or P < 1:
        raise ValueError("M and P must be >= 1")
    alphabet = alphabet.lower()
    rng = np.random.default_rng(rng_seed)
    if alphabet == "bpsk":
        x = rng.choice([-1.0, 1.0], size=(M, P)).astype(complex)
    elif alphabet == "qpsk":
        x = rng.choice([-1.0, 1.0], size=(M, P)) + 1j * rng.choice([-1.0, 1.0], size=(M, P))
    elif alphabet in ("gauss", "gaussian"):
        alphabet = "gauss"
        x = rng.standard_normal((M, P)).astype(complex)
    else:
        raise ValueError(f"unknown pilot alphabet {alphabet!r}")
    return PilotMatrix(x, alphabet)


def kruskal_rank(m: np.ndarray, tol: float = 1e-10) -> int:
    """Largest k such that every k columns of ``m`` are linearly independent (exhaustive)."""
    m = np.atleast_2d(np.asarray(m))
    rows, cols = m.shape
    if max(rows, cols) > KRANK_MAX:
        raise ValueError(f"exhaustive k-rank limited to matrices up to {KRANK_MAX}x{KRANK_MAX}")
    scale = max(np.abs(m).max(), 1.0)
    best = 0
    for k in range(1, min(rows, cols) + 1):
        for subset in itertools.combinations(range(cols), k):
            s = np.linalg.svd(m[:, subset], compute_uv=False)
            if s[-1] <= tol * scale:
                return best
        best = k
    return best


def check_pilot_conditions(pilot: PilotMatrix) -> dict:
    pt = pilot.entries.T
    left_inv = pilot.P >= pilot.M and np.linalg.matrix_rank(pt) == pilot.M
    return {"has_left_pseudo_inverse": bool(left_inv), "krank": kruskal_rank(pilot.entries)}


@dataclass
class MeasurementOperator:
    """Q = (P^T kron I_N) A^L with a factored matvec; the dense matrix is cached when small."""

    pilot: PilotMatrix
    sensing: SensingMatrix
    n_rx: int
    _dense: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.sensing.n != self.pilot.M * self.n_rx:
            raise ValueError(
                f"composite sensing keeps {self.sensing.n} entries, expected M*N = "
                f"{self.pilot.M}*{self.n_rx}")

    @property
    def L(self) -> int:
        return self.pilot.P * self.n_rx

    @property
    def L_u(self) -> int:
        return self.sensing.source_dims.total()

    @property
    def shape(self) -> tuple[int, int]:
        return (self.L, self.L_u)

    def _kron_block(self) -> np.ndarray:
        return np.kron(self.pilot.entries.T, np.eye(self.n_rx))

    def dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        q = np.zeros(self.shape, dtype=complex)
        q[:, self.sensing.index] = self._kron_block()
        if self.L * self.L_u <= DENSE_CACHE_LIMIT:
            self._dense = q
        return q

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Q x through the factorization: gather, reshape to H (N x M), right-multiply by P."""
        x = np.asarray(x)
        z = x[self.sensing.index]
        h = z.reshape(self.pilot.M, self.n_rx, *x.shape[1:]).swapaxes(0, 1)
        y = np.einsum("nm...,mp->np...", h, self.pilot.entries)
        return y.swapaxes(0, 1).reshape(self.L, *x.shape[1:])

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        yy = y.reshape(self.pilot.P, self.n_rx, *y.shape[1:]).swapaxes(0, 1)
        h = np.einsum("np...,mp->nm...", yy, self.pilot.entries.conj())
        out = np.zeros((self.L_u, *y.shape[1:]), dtype=complex)
        out[self.sensing.index] = h.swapaxes(0, 1).reshape(self.pilot.M * self.n_rx, *y.shape[1:])
        return out

    def rank(self, tol: float = 1e-9) -> int:
        s = np.linalg.svd(self.dense(), compute_uv=False)
        return int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0

    def is_tall(self) -> bool:
        return self.L >= self.L_u


def build_operator(pilot: PilotMatrix, composite_sensing: SensingMatrix, N: int) -> MeasurementOperator:
    return MeasurementOperator(pilot, composite_sensing, int(N))


@dataclass(frozen=True)
class Observation:
    y: np.ndarray
    noise_variance: float = 0.0
    snr_db: float | None = None


def noise_variance(snr_db: float | None, signal_power: float) -> float:
    if snr_db is None or np.isinf(snr_db):
        return 0.0
    return float(signal_power / 10 ** (snr_db / 10))


def observe(op: MeasurementOperator, h_u: np.ndarray, snr_db: float | None = None,
            rng_seed=None, n_paths: int | None = None) -> Observation:
    """y = Q h_u + w.

    The SNR is an ensemble quantity E||h_u||^2 / sigma^2 with E||h_u||^2 = K for unit-norm atoms
    and unit-variance gains; pass ``n_paths`` = K. Without it the realized ||h_u||^2 is used.
    """
    y = op.matvec(h_u)
    if snr_db is None or np.isinf(snr_db):
        return Observation(y, 0.0, snr_db)
    power = float(n_paths) if n_paths is not None else float(np.vdot(h_u, h_u).real)
    sigma2 = noise_variance(snr_db, power)
    rng = np.random.default_rng(rng_seed)
    w = np.sqrt(sigma2) * complex_normal(rng, y.shape[0])
    return Observation(y + w, sigma2, float(snr_db))
