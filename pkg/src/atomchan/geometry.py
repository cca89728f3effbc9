"""Array geometry: dimension vectors, steering vectors and sensing (antenna selection) matrices."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

MAX_DIMS = 6
MAX_SEARCH_SIZE = 4096
TORUS_TOL = 1e-12


@dataclass(frozen=True)
class DimensionVector:
    """Antenna counts per dimension of a uniform array."""

    dims: tuple[int, ...]
    canonical: bool = False

    def __post_init__(self):
        dims = tuple(int(x) for x in self.dims)
        object.__setattr__(self, "dims", dims)
        if not 1 <= len(dims) <= MAX_DIMS:
            raise ValueError(f"need 1..{MAX_DIMS} dimensions, got {len(dims)}")
        if any(x < 1 for x in dims):
            raise ValueError(f"dimension sizes must be positive: {dims}")
        if self.canonical and list(dims) != sorted(dims):
            raise ValueError(f"canonical dimension vector must be nondecreasing: {dims}")

    @classmethod
    def of(cls, dims, canonical: bool | None = None) -> "DimensionVector":
        if isinstance(dims, DimensionVector):
            return dims
        dims = tuple(int(x) for x in dims)
        if canonical is None:
            canonical = list(dims) == sorted(dims)
        return cls(dims, canonical)

    @property
    def d(self) -> int:
        return len(self.dims)

    def total(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self):
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)

    def __getitem__(self, i):
        return self.dims[i]


def multi_indices(dims) -> np.ndarray:
    """(L_u, d) integer positions in row-major Kronecker order (first dimension slowest)."""
    dims = DimensionVector.of(dims).dims
    grids = np.indices(dims).reshape(len(dims), -1)
    return grids.T.copy()


def _as_freq(dims: DimensionVector, freq) -> np.ndarray:
    freq = np.atleast_1d(np.asarray(freq, dtype=float))
    if freq.shape[0] != dims.d:
        raise ValueError(f"frequency has {freq.shape[0]} entries, dimension vector has {dims.d}")
    return freq


def steering_1d(n: int, f) -> np.ndarray:
    """Uniform linear steering vectors; ``f`` scalar or (K,) gives (n,) or (n, K)."""
    f = np.asarray(f, dtype=float)
    return np.exp(2j * np.pi * np.multiply.outer(np.arange(n), f)) / np.sqrt(n)


def steering_vector(dims, freq) -> np.ndarray:
    """Unit-norm steering vector of a uniform d-D array for one torus frequency."""
    dims = DimensionVector.of(dims)
    freq = _as_freq(dims, freq)
    pos = multi_indices(dims)
    return np.exp(2j * np.pi * (pos @ freq)) / np.sqrt(dims.total())


def angles_to_frequency(theta: float, phi: float, spacing, d: int) -> np.ndarray:
    """Map azimuth/elevation (radians) to normalized torus frequencies of a d-D array."""
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (d,)) if np.ndim(spacing) == 0 \
        else np.asarray(spacing, dtype=float)
    if len(spacing) < d or np.any(spacing[:d] <= 0):
        raise ValueError("need a positive spacing per dimension")
    raw = np.array([
        np.cos(theta),
        np.sin(theta) * np.sin(phi),
        np.sin(theta) * np.cos(phi),
    ])[:d]
    return np.mod(spacing[:d] * raw, 1.0)


def torus_distance(a, b) -> np.ndarray:
    """Elementwise wrap-around distance min(|a-b|, 1-|a-b|) on [0, 1)."""
    diff = np.abs(np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 1.0))
    return np.minimum(diff, 1.0 - diff)


@dataclass(frozen=True)
class SensingMatrix:
    """0/1 row-selection matrix A with A @ u keeping the entries listed in ``row_selection``.

    Indices are 0-based positions into the underlying uniform array of ``source_dims``.
    """

    row_selection: tuple[int, ...]
    source_dims: DimensionVector

    def __post_init__(self):
        sel = tuple(int(i) for i in self.row_selection)
        object.__setattr__(self, "row_selection", sel)
        object.__setattr__(self, "source_dims", DimensionVector.of(self.source_dims))
        n_u = self.source_dims.total()
        if len(set(sel)) != len(sel):
            raise ValueError("sensing selection has repeated indices")
        if any(i < 0 or i >= n_u for i in sel):
            raise ValueError(f"sensing selection index out of range [0, {n_u})")
        if not sel:
            raise ValueError("empty sensing selection")

    @classmethod
    def identity(cls, dims) -> "SensingMatrix":
        dims = DimensionVector.of(dims)
        return cls(tuple(range(dims.total())), dims)

    @property
    def n(self) -> int:
        return len(self.row_selection)

    @property
    def index(self) -> np.ndarray:
        return np.asarray(self.row_selection, dtype=int)

    def is_identity(self) -> bool:
        return self.row_selection == tuple(range(self.source_dims.total()))

    def realize(self) -> np.ndarray:
        a = np.zeros((self.n, self.source_dims.total()))
        a[np.arange(self.n), self.index] = 1.0
        return a

    def to_dict(self) -> dict:
        sel = "all" if self.is_identity() else list(self.row_selection)
        return {"dims": list(self.source_dims.dims), "selection": sel}

    @classmethod
    def from_dict(cls, data: dict) -> "SensingMatrix":
        dims = DimensionVector.of(data["dims"])
        sel = data.get("selection", "all")
        if sel == "all":
            return cls.identity(dims)
        return cls(tuple(sel), dims)


def heterogeneous_steering(sensing: SensingMatrix, dims, freq) -> np.ndarray:
    """Steering vector of the thinned array: the selected entries of the uniform one."""
    dims = DimensionVector.of(dims)
    if sensing.source_dims.dims != dims.dims:
        raise ValueError("sensing matrix built on a different dimension vector")
    return steering_vector(dims, freq)[sensing.index]


@dataclass(frozen=True)
class ReconstructionDegree:
    kappa: int
    embed_dims: DimensionVector
    delta: tuple[int, ...]
    strides: tuple[int, ...] = field(default=())

    @property
    def nontrivial(self) -> bool:
        """Membership in the non-trivial class: kappa >= d + 1."""
        return self.kappa >= self.embed_dims.d + 1


def _prefix_box_sizes(block: np.ndarray) -> np.ndarray:
    """Sum of extents of every fully-retained prefix box of ``block``; -1 where not retained."""
    ok = block.copy()
    for ax in range(ok.ndim):
        ok = np.logical_and.accumulate(ok, axis=ax)
    sizes = sum(np.indices(ok.shape)[i] + 1 for i in range(ok.ndim))
    return np.where(ok, sizes, -1)


def reconstruction_degree(sensing: SensingMatrix) -> ReconstructionDegree:
    """Largest embedded uniform sub-array (offset Delta, integer strides alpha) of a deployment.

    Exhaustive over offsets and strides; ties keep the lexicographically smallest (Delta, strides).
    """
    dims = sensing.source_dims
    shape = dims.dims
    if dims.total() > MAX_SEARCH_SIZE:
        raise ValueError(f"exhaustive search bounded to {MAX_SEARCH_SIZE} elements")
    mask = np.zeros(dims.total(), dtype=bool)
    mask[sensing.index] = True
    mask = mask.reshape(shape)

    if mask.all():
        return ReconstructionDegree(sum(shape), DimensionVector(shape), (0,) * dims.d, (1,) * dims.d)

    best = (-1, None, None, None)
    stride_ranges = [range(1, max(n, 2)) for n in shape]
    offsets = sorted(tuple(int(v) for v in p) for p in multi_indices(dims)[sensing.index])
    for delta in offsets:
        # upper bound on any box anchored here
        if sum(n - o for n, o in zip(shape, delta)) <= best[0]:
            continue
        for strides in itertools.product(*stride_ranges):
            block = mask[tuple(slice(o, None, a) for o, a in zip(delta, strides))]
            if sum(block.shape) <= best[0]:
                continue
            sizes = _prefix_box_sizes(block)
            flat = int(np.argmax(sizes))
            value = int(sizes.flat[flat])
            if value > best[0]:
                ext = tuple(int(i) + 1 for i in np.unravel_index(flat, block.shape))
                best = (value, ext, delta, strides)
    value, ext, delta, strides = best
    # unit extents make the stride irrelevant; report 1 there
    strides = tuple(a if e > 1 else 1 for a, e in zip(strides, ext))
    return ReconstructionDegree(value, DimensionVector(ext), delta, strides)


def composite_dim_order(tx_dims, rx_dims) -> tuple[int, ...]:
    """Stable permutation sorting [tx dims, rx dims] nondecreasingly (ties keep transmit first)."""
    natural = list(DimensionVector.of(tx_dims).dims) + list(DimensionVector.of(rx_dims).dims)
    return tuple(int(i) for i in np.argsort(natural, kind="stable"))


def composite_index_map(tx_dims, rx_dims, order=None) -> tuple[DimensionVector, np.ndarray]:
    """Canonical composite dimension vector and the map natural flat index -> canonical flat index.

    Natural order is the Kronecker order u_tx (x) u_rx, i.e. column-major vec of an N x M matrix.
    """
    tx_dims = DimensionVector.of(tx_dims)
    rx_dims = DimensionVector.of(rx_dims)
    natural = tx_dims.dims + rx_dims.dims
    if order is None:
        order = composite_dim_order(tx_dims, rx_dims)
    order = tuple(order)
    if sorted(order) != list(range(len(natural))):
        raise ValueError(f"invalid dimension permutation {order}")
    comp = tuple(natural[j] for j in order)
    pos = multi_indices(natural)[:, order]
    canon = np.ravel_multi_index(pos.T, comp)
    return DimensionVector(comp, canonical=list(comp) == sorted(comp)), canon


def compose_sensing(tx: SensingMatrix, rx: SensingMatrix, reorder=None) -> SensingMatrix:
    """Composite selection (A_tx (x) A_rx) Pi_u over the canonical composite array.

    ``reorder`` is the dimension permutation applied to [tx dims, rx dims]; defaults to the
    stable nondecreasing sort.
    """
    comp, canon = composite_index_map(tx.source_dims, rx.source_dims, reorder)
    n_u = rx.source_dims.total()
    natural = (tx.index[:, None] * n_u + rx.index[None, :]).ravel()
    return SensingMatrix(tuple(int(i) for i in canon[natural]), comp)


def kron_all(factors) -> np.ndarray:
    return reduce(np.kron, factors)
