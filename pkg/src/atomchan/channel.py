"""Sparse parametric MIMO channels built from K propagation paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    DimensionVector,
    SensingMatrix,
    composite_dim_order,
    multi_indices,
    steering_1d,
    steering_vector,
)


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Circular complex Gaussian with unit variance."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def atom_matrix(dims, freqs) -> np.ndarray:
    """L_u x K matrix whose columns are the steering vectors of the columns of ``freqs`` (d x K)."""
    dims = DimensionVector.of(dims)
    freqs = np.asarray(freqs, dtype=float).reshape(dims.d, -1)
    pos = multi_indices(dims)
    return np.exp(2j * np.pi * (pos @ freqs)) / np.sqrt(dims.total())


def khatri_rao_atoms(dims, freqs) -> np.ndarray:
    """Same atoms as :func:`atom_matrix`, built as a column-wise Kronecker (Khatri-Rao) product."""
    dims = DimensionVector.of(dims)
    freqs = np.asarray(freqs, dtype=float).reshape(dims.d, -1)
    out = steering_1d(dims[0], freqs[0])
    for n, f in zip(dims.dims[1:], freqs[1:]):
        v = steering_1d(n, f)
        out = (out[:, None, :] * v[None, :, :]).reshape(-1, freqs.shape[1])
    return out


def elementwise_distinct(freqs, tol: float = 1e-12) -> bool:
    """True when no two paths share a frequency in any single dimension."""
    freqs = np.asarray(freqs, dtype=float)
    for row in freqs:
        d = np.abs(np.mod(row[:, None] - row[None, :], 1.0))
        d = np.minimum(d, 1 - d)
        np.fill_diagonal(d, np.inf)
        if np.any(d <= tol):
            return False
    return True


@dataclass(frozen=True)
class SparseChannel:
    """K-path channel: composite canonical frequencies (d_L x K) and complex gains.

    Column k of ``freqs`` is Pi_d [-g_k, f_k] mod 1 where g_k is the departure (transmit)
    frequency and f_k the arrival (receive) frequency.
    """

    freqs: np.ndarray
    gains: np.ndarray
    tx_dims: DimensionVector
    rx_dims: DimensionVector
    dim_reorder: tuple[int, ...]

    def __post_init__(self):
        freqs = np.mod(np.atleast_2d(np.asarray(self.freqs, dtype=float)), 1.0)
        gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "tx_dims", DimensionVector.of(self.tx_dims))
        object.__setattr__(self, "rx_dims", DimensionVector.of(self.rx_dims))
        object.__setattr__(self, "dim_reorder", tuple(int(i) for i in self.dim_reorder))
        if freqs.shape[1] != gains.shape[0] or gains.shape[0] < 1:
            raise ValueError("need K >= 1 paths with one gain per frequency column")
        if freqs.shape[0] != self.tx_dims.d + self.rx_dims.d:
            raise ValueError("frequency rows must equal d_tx + d_rx")

    @property
    def K(self) -> int:
        return self.gains.shape[0]

    @property
    def dims(self) -> DimensionVector:
        natural = self.tx_dims.dims + self.rx_dims.dims
        comp = tuple(natural[j] for j in self.dim_reorder)
        return DimensionVector(comp, canonical=list(comp) == sorted(comp))

    def natural_freqs(self) -> np.ndarray:
        """Frequencies in natural [-g, f] order."""
        nat = np.empty_like(self.freqs)
        nat[list(self.dim_reorder)] = self.freqs
        return nat

    def departure_freqs(self) -> np.ndarray:
        """Transmit frequencies g (d_tx x K)."""
        return np.mod(-self.natural_freqs()[: self.tx_dims.d], 1.0)

    def arrival_freqs(self) -> np.ndarray:
        """Receive frequencies f (d_rx x K)."""
        return self.natural_freqs()[self.tx_dims.d:]

    def to_dict(self) -> dict:
        return {
            "tx_dims": list(self.tx_dims.dims),
            "rx_dims": list(self.rx_dims.dims),
            "dim_reorder": list(self.dim_reorder),
            "freqs": self.freqs.tolist(),
            "gains": [[float(g.real), float(g.imag)] for g in self.gains],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SparseChannel":
        gains = np.array([complex(re, im) for re, im in data["gains"]])
        return cls(np.array(data["freqs"], dtype=float), gains,
                   DimensionVector.of(data["tx_dims"]), DimensionVector.of(data["rx_dims"]),
                   tuple(data["dim_reorder"]))


def draw_channel(K: int, tx_dims, rx_dims, rng_seed=None) -> SparseChannel:
    """Frequencies i.i.d. uniform on the torus, gains i.i.d. unit complex normal."""
    if K < 1:
        raise ValueError("K must be >= 1")
    tx_dims = DimensionVector.of(tx_dims)
    rx_dims = DimensionVector.of(rx_dims)
    rng = np.random.default_rng(rng_seed)
    d_l = tx_dims.d + rx_dims.d
    freqs = rng.random((d_l, K))
    gains = complex_normal(rng, K)
    return SparseChannel(freqs, gains, tx_dims, rx_dims, composite_dim_order(tx_dims, rx_dims))


def composite_model(ch: SparseChannel) -> np.ndarray:
    """h_u = U_L(l_{1:K}) gamma over the canonical composite array."""
    return atom_matrix(ch.dims, ch.freqs) @ ch.gains


def channel_matrix(ch: SparseChannel, tx_sensing: SensingMatrix | None = None,
                   rx_sensing: SensingMatrix | None = None) -> np.ndarray:
    """N x M matrix H = sum_k gamma_k v_N(f_k) v_M(-g_k)^T."""
    tx_sensing = tx_sensing or SensingMatrix.identity(ch.tx_dims)
    rx_sensing = rx_sensing or SensingMatrix.identity(ch.rx_dims)
    if tx_sensing.source_dims.dims != ch.tx_dims.dims or rx_sensing.source_dims.dims != ch.rx_dims.dims:
        raise ValueError("sensing matrices do not match the channel's array dimensions")
    g = ch.departure_freqs()
    f = ch.arrival_freqs()
    h = np.zeros((rx_sensing.n, tx_sensing.n), dtype=complex)
    for k in range(ch.K):
        v_rx = steering_vector(ch.rx_dims, f[:, k])[rx_sensing.index]
        v_tx = steering_vector(ch.tx_dims, -g[:, k])[tx_sensing.index]
        h += ch.gains[k] * np.outer(v_rx, v_tx)
    return h


def vec(m: np.ndarray) -> np.ndarray:
    """Column-major stacking."""
    return np.asarray(m).reshape(-1, order="F")


def check_unique_representation(dims, K: int) -> bool:
    """Sufficient condition for a unique K-atom representation: sum L_i >= 2K + d - 1."""
    dims = DimensionVector.of(dims)
    return sum(dims.dims) >= 2 * K + (dims.d - 1)
