"""Grid-based comparison estimators: OMP, multi-dimensional MUSIC and LMMSE."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .channel import atom_matrix
from .geometry import DimensionVector, multi_indices
from .measurement import MeasurementOperator

log = logging.getLogger(__name__)

DEFAULT_MAX_DICT = 65_536


@dataclass(frozen=True)
class GridDictionary:
    """Uniform frequency grid over the torus with one unit-norm atom per grid point."""

    dims: DimensionVector
    sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", DimensionVector.of(self.dims))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) != self.dims.d or min(self.sizes) < 1:
            raise ValueError("one positive grid size per dimension required")

    @classmethod
    def proportional(cls, dims, length: int) -> "GridDictionary":
        """Grid sizes proportional to the array dimensions with total close to ``length``."""
        dims = DimensionVector.of(dims)
        scale = (length / dims.total()) ** (1.0 / dims.d)
        return cls(dims, tuple(max(1, int(round(scale * n))) for n in dims.dims))

    @property
    def length(self) -> int:
        return int(np.prod(self.sizes))

    def frequencies(self) -> np.ndarray:
        """(d, length) grid frequencies in row-major grid order."""
        return (multi_indices(self.sizes) / np.array(self.sizes)).T

    def atoms(self) -> np.ndarray:
        return atom_matrix(self.dims, self.frequencies())


@dataclass
class OMPResult:
    freqs: np.ndarray
    gains: np.ndarray
    l_u_hat: np.ndarray
    selected: list[int]
    residual_norms: list[float]


def _ls_pre_estimate(operator: MeasurementOperator, y: np.ndarray) -> np.ndarray:
    sol, *_ = np.linalg.lstsq(operator.dense(), y, rcond=None)
    return sol


def _has_left_inverse(operator: MeasurementOperator) -> bool:
    pilot = operator.pilot
    return pilot.P >= pilot.M and pilot.rank() == pilot.M


def omp_estimate(operator: MeasurementOperator, y: np.ndarray, K: int,
                 dictionary: GridDictionary, atoms: np.ndarray | None = None) -> OMPResult:
    """K greedy atom selections; works on the LS pre-estimate when the pilots admit a left inverse."""
    if K < 1:
        raise ValueError("K must be >= 1")
    atoms = dictionary.atoms() if atoms is None else atoms
    y = np.asarray(y, dtype=complex)
    if _has_left_inverse(operator):
        target = _ls_pre_estimate(operator, y)
        basis = atoms
    else:
        target = y
        basis = operator.dense() @ atoms
    norms = np.linalg.norm(basis, axis=0)
    usable = norms > 1e-12 * max(norms.max(), np.finfo(float).tiny)
    resid = target.copy()
    selected: list[int] = []
    residual_norms = [float(np.linalg.norm(resid))]
    gains = np.zeros(0, dtype=complex)
    for _ in range(K):
        score = np.zeros(basis.shape[1])
        score[usable] = np.abs(basis[:, usable].conj().T @ resid) / norms[usable]
        score[selected] = -1.0
        j = int(np.argmax(score))
        selected.append(j)
        gains, *_ = np.linalg.lstsq(basis[:, selected], target, rcond=None)
        resid = target - basis[:, selected] @ gains
        residual_norms.append(float(np.linalg.norm(resid)))
    freqs = dictionary.frequencies()[:, selected]
    return OMPResult(freqs, gains, atoms[:, selected] @ gains, selected, residual_norms)


def hankel_split(n: int) -> tuple[int, int]:
    """Two-factor split (a, b) with a + b - 1 = n, closest to square, a <= b."""
    a = (n + 1) // 2
    return a, n + 1 - a


def hankel_matrix(h: np.ndarray, dims, row_dims=None) -> np.ndarray:
    """Multi-level Hankel stacking: entry (a, b) is h at multi-index a + b."""
    dims = DimensionVector.of(dims)
    row_dims = tuple(row_dims) if row_dims is not None else tuple(hankel_split(n)[0] for n in dims.dims)
    col_dims = tuple(n + 1 - a for n, a in zip(dims.dims, row_dims))
    if any(a < 1 or b < 1 for a, b in zip(row_dims, col_dims)):
        raise ValueError("Hankel row dims must lie in [1, L_i]")
    rows = multi_indices(row_dims)
    cols = multi_indices(col_dims)
    pos = rows[:, None, :] + cols[None, :, :]
    flat = np.ravel_multi_index(tuple(np.moveaxis(pos, -1, 0)), dims.dims)
    return np.asarray(h)[flat]


@dataclass
class MusicResult:
    freqs: np.ndarray
    values: np.ndarray
    spectrum: np.ndarray
    n_peaks: int


def _strict_local_maxima(spec: np.ndarray) -> np.ndarray:
    """Boolean mask of strict local maxima on the wrapped grid (all 3^d - 1 neighbours)."""
    mask = np.ones(spec.shape, dtype=bool)
    steps = [(0,) if n == 1 else (-1, 0, 1) for n in spec.shape]
    for shift in itertools.product(*steps):
        if not any(shift):
            continue
        mask &= spec > np.roll(spec, shift, axis=tuple(range(spec.ndim)))
    return mask


def music_estimate(h_est: np.ndarray, dims, K: int, grid: GridDictionary,
                   row_dims=None) -> MusicResult:
    """Single-snapshot MUSIC on a multi-level Hankel stacking of a channel estimate.

    The signal subspace is spanned by the K leading left singular vectors of the Hankel matrix,
    whose H = prod(row_dims) rows carry steering vectors of the row sub-array.
    """
    dims = DimensionVector.of(dims)
    row_dims = tuple(row_dims) if row_dims is not None else tuple(hankel_split(n)[0] for n in dims.dims)
    h_rows = int(np.prod(row_dims))
    if K >= h_rows:
        raise ValueError(f"K = {K} must be below the Hankel size H = {h_rows}")
    if h_rows >= dims.total():
        raise ValueError("Hankel size must be below L_u")
    x = hankel_matrix(h_est, dims, row_dims)
    u, _, _ = np.linalg.svd(x, full_matrices=True)
    noise = u[:, K:]
    freqs = grid.frequencies()
    spec = np.empty(grid.length)
    chunk = 8192
    for lo in range(0, grid.length, chunk):
        a = atom_matrix(row_dims, freqs[:, lo:lo + chunk])
        proj = np.sum(np.abs(noise.conj().T @ a) ** 2, axis=0)
        spec[lo:lo + chunk] = 1.0 / np.maximum(proj, np.finfo(float).tiny)
    cube = spec.reshape(grid.sizes)
    peaks = np.flatnonzero(_strict_local_maxima(cube).ravel())
    # larger value first, then lexicographic grid index
    peaks = peaks[np.lexsort((peaks, -spec[peaks]))]
    chosen = list(peaks[:K])
    n_peaks = len(chosen)
    if n_peaks < K:
        rest = np.setdiff1d(np.arange(grid.length), chosen)
        rest = rest[np.lexsort((rest, -spec[rest]))]
        chosen += list(rest[: K - n_peaks])
    chosen = np.array(chosen, dtype=int)
    return MusicResult(freqs[:, chosen], spec[chosen], spec, n_peaks)


def gains_for_frequencies(operator: MeasurementOperator, y: np.ndarray, dims,
                          freqs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares gains of ``y`` on Q u(freqs); returns (gains, l_u_hat)."""
    u = atom_matrix(dims, freqs)
    gains, *_ = np.linalg.lstsq(operator.dense() @ u, y, rcond=None)
    return gains, u @ gains


def lmmse_estimate(operator: MeasurementOperator, y: np.ndarray, K: int, sigma2: float) -> np.ndarray:
    """C_h Q^H (Q C_h Q^H + sigma^2 I)^-1 y with the isotropic prior C_h = (K / L_u) I."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    q = operator.dense()
    c = K / operator.L_u
    gram = c * (q @ q.conj().T) + sigma2 * np.eye(q.shape[0])
    w, *_ = np.linalg.lstsq(gram, np.asarray(y, dtype=complex), rcond=None)
    return c * (q.conj().T @ w)


def an_cost(L_u: int, eps: float = 1e-7) -> float:
    return (L_u ** 3.5 + L_u ** 2.5 + math.sqrt(L_u)) * math.log(1.0 / eps)


def omp_cost(length: int, L_u: int, K: int) -> float:
    head = K * (length ** 2 * K + L_u + length)
    return head + sum(k ** 3 + 2 * L_u * k ** 2 + 2 * L_u * k for k in range(1, K + 1))


def music_cost(length: int, H: int, d: int, K: int) -> float:
    return length * (H ** 2 + H * d - H * K + 2 * H - K + 1) + H * (H - K) ** 2


def _largest_within(cost, target: float, cap: int) -> int:
    if cost(cap) <= target:
        return cap
    lo, hi = 0, cap
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cost(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


def complexity_budget(method: str, dims, K: int, target_ops: float | None = None,
                      eps: float = 1e-7, max_length: int = DEFAULT_MAX_DICT) -> dict:
    """Largest dictionary length whose cost model stays within the AN solver's cost."""
    dims = DimensionVector.of(dims)
    L_u = dims.total()
    target = an_cost(L_u, eps) if target_ops is None else float(target_ops)
    if method == "omp":
        length = _largest_within(lambda n: omp_cost(n, L_u, K), target, max_length)
        extra = {}
    elif method == "music":
        H = int(np.prod([hankel_split(n)[0] for n in dims.dims]))
        length = _largest_within(lambda n: music_cost(n, H, dims.d, K), target, max_length)
        extra = {"H": H}
    else:
        raise ValueError(f"no cost model for method {method!r}")
    length = max(length, 1)
    grid = GridDictionary.proportional(dims, length)
    log.info("%s budget %.3g ops -> dictionary length %d, grid %s", method, target, length, grid.sizes)
    return {"method": method, "target_ops": target, "length": length, "grid": grid.sizes, **extra}
