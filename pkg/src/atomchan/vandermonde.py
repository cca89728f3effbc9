"""Multi-level Vandermonde decomposition T = U(l_{1:r}) D U(l_{1:r})^H of a PSD MLT matrix.

Per dimension, a shift-invariance equation on a low-rank factor of T yields a unitary matrix
whose eigenvalues carry the frequencies of that dimension; the per-dimension frequencies are
then paired into d-tuples through the coupling between the factor and the atoms found so far.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import atom_matrix
from .geometry import DimensionVector, torus_distance
from .mlt import RANK_TOL, MLTGenerator, decomposition_admissible, from_atoms, realize

STAGE_TOL = 1e-6
PAIRING_MARGIN = 1.01
PSD_SLACK = 1e-9
EIG_CLUSTER_TOL = 1e-6


class DecompositionError(RuntimeError):
    """Raised when a decomposition cannot be carried out; ``code`` names the failing step."""

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


@dataclass(frozen=True)
class VandermondeDecomposition:
    dims: DimensionVector
    freqs: np.ndarray
    weights: np.ndarray

    @property
    def r(self) -> int:
        return self.weights.shape[0]

    def to_generator(self) -> MLTGenerator:
        return from_atoms(self.dims, self.freqs, self.weights)

    def realize(self) -> np.ndarray:
        u = atom_matrix(self.dims, self.freqs)
        return (u * self.weights) @ u.conj().T


@dataclass(frozen=True)
class ShiftStage:
    level: int
    factor: np.ndarray
    rotation: np.ndarray
    eigvecs: np.ndarray
    freqs: np.ndarray
    residual: float


def low_rank_factor(gen: MLTGenerator | np.ndarray, rank: int | None = None,
                    tol: float = RANK_TOL) -> np.ndarray:
    """C with C C^H = T, from the top eigenpairs (works for rank-deficient PSD T)."""
    t = realize(gen) if isinstance(gen, MLTGenerator) else np.asarray(gen)
    w, v = np.linalg.eigh(t)
    top = max(np.max(np.abs(w)), np.finfo(float).tiny)
    if rank is None:
        if w[0] < -PSD_SLACK * top:
            raise DecompositionError("not_psd", f"minimum eigenvalue {w[0]:.3e} below PSD slack")
        rank = int(np.sum(w > tol * top))
    if rank < 1:
        raise DecompositionError("zero_rank", "matrix is numerically zero")
    w_r = np.clip(w[-rank:], 0.0, None)
    return v[:, -rank:] * np.sqrt(w_r)


def _block_size(dims: DimensionVector, level: int) -> int:
    return int(np.prod(dims.dims[level:]))


def shift_stage(c: np.ndarray, dims, level: int, tol: float = STAGE_TOL,
                strict: bool = True) -> ShiftStage:
    """Solve C[I] O = C[I+] for a unitary O at ``level`` (0-based) and diagonalize it.

    ``c`` holds the rows of the first block of the factor at this level, i.e. prod(L_level:)
    rows where the outer dimensions sit at index zero. With ``strict=False`` an underdetermined
    shift system is solved in the minimum-norm sense instead of being refused.
    """
    dims = DimensionVector.of(dims)
    inner = _block_size(dims, level + 1)
    rows = dims[level] * inner
    c = np.asarray(c)[:rows]
    r = c.shape[1]
    lower, upper = c[: rows - inner], c[inner:rows]
    if lower.shape[0] < r and strict:
        raise DecompositionError("rank_deficient_shift",
                                 f"level {level}: {lower.shape[0]} rows cannot resolve rank {r}")
    s = np.linalg.svd(lower, compute_uv=False)
    if strict and s[-1] <= 1e-8 * s[0]:
        raise DecompositionError("rank_deficient_shift",
                                 f"level {level}: shift system is rank deficient")
    ls, *_ = np.linalg.lstsq(lower, upper, rcond=None)
    # nearest unitary (polar factor)
    uu, _, vvh = np.linalg.svd(ls)
    rot = uu @ vvh
    resid = np.linalg.norm(lower @ rot - upper) / max(np.linalg.norm(upper), np.finfo(float).tiny)
    ev, vecs = np.linalg.eig(rot)
    freqs = np.mod(np.angle(ev) / (2 * np.pi), 1.0)
    return ShiftStage(level, c, rot, vecs, freqs, float(resid))


def _cluster_labels(freqs: np.ndarray, tol: float = EIG_CLUSTER_TOL) -> np.ndarray:
    labels = -np.ones(freqs.size, dtype=int)
    nxt = 0
    for k in range(freqs.size):
        if labels[k] >= 0:
            continue
        same = (torus_distance(freqs, freqs[k]) <= tol) & (labels < 0)
        labels[same] = nxt
        nxt += 1
    return labels


def pair_frequencies(stages: list[ShiftStage], dims, strict: bool = True) -> np.ndarray:
    """Assemble d x r frequency tuples from per-level eigenfrequencies.

    Starting from the innermost level, for each outer level the weak inverse of the atoms built so
    far maps the factor to an r x r coupling R (unitary for exact input); the eigenvectors of the
    outer level's rotation are matched to tuples by maximum-weight assignment on |R K|^2.
    """
    dims = DimensionVector.of(dims)
    d = dims.d
    stages = sorted(stages, key=lambda s: s.level)
    r = stages[-1].freqs.size
    if any(s.freqs.size != r for s in stages):
        raise DecompositionError("rank_mismatch", "stages disagree on the rank")
    tuples = stages[-1].freqs[None, :].copy()
    for level in range(d - 1, 0, -1):
        c = stages[level].factor
        sub = DimensionVector(dims.dims[level:])
        u = atom_matrix(sub, tuples)
        u_pinv = np.linalg.pinv(u)
        m = u_pinv @ c @ c.conj().T @ u_pinv.conj().T
        scale = np.sqrt(np.clip(np.real(np.diag(m)), np.finfo(float).tiny, None))
        coupling_r = (u_pinv @ c) / scale[:, None]
        outer = stages[level - 1]
        weight = np.abs(coupling_r @ outer.eigvecs) ** 2
        rows, cols = linear_sum_assignment(weight, maximize=True)
        order = np.empty(r, dtype=int)
        order[rows] = cols
        if strict and r > 1:
            labels = _cluster_labels(outer.freqs)
            n_clusters = labels.max() + 1
            agg = np.zeros((r, n_clusters))
            for j in range(n_clusters):
                agg[:, j] = weight[:, labels == j].sum(axis=1)
            for k in range(r):
                mine = labels[order[k]]
                others = np.delete(agg[k], mine)
                if others.size and agg[k, mine] < PAIRING_MARGIN * others.max():
                    raise DecompositionError(
                        "ambiguous_pairing",
                        f"level {level - 1}: tuple {k} coupling {agg[k, mine]:.3g} vs {others.max():.3g}")
        tuples = np.vstack([outer.freqs[order][None, :], tuples])
    return tuples


def decompose(gen: MLTGenerator, rank: int | None = None, tol: float = RANK_TOL,
              stage_tol: float = STAGE_TOL, strict: bool = True) -> VandermondeDecomposition:
    """Vandermonde decomposition of a canonical PSD MLT matrix.

    With ``rank`` given, the matrix is truncated to that rank (noisy solver output) and the
    admissibility test is replaced by the guard rank < L_d. ``strict=False`` drops every guard and
    returns a best-effort (generally wrong) decomposition even when uniqueness cannot hold.
    """
    dims = gen.dims
    if rank is None:
        report = decomposition_admissible(gen, tol=tol)
        if not report["psd"]:
            raise DecompositionError("not_psd", "input is not positive semidefinite")
        if not report["admissible"]:
            raise DecompositionError(
                "inadmissible",
                f"rank {report['rank']}, corner rank {report['corner_rank']}, L_d {dims[-1]}")
        rank = report["rank"]
    elif rank >= dims[-1] and strict:
        raise DecompositionError("inadmissible", f"rank {rank} must be below L_d = {dims[-1]}")
    c = low_rank_factor(gen, rank=rank, tol=tol)
    stages = []
    for level in range(dims.d):
        st = shift_stage(c, dims, level, strict=strict)
        if strict and st.residual > stage_tol:
            raise DecompositionError("stage_residual",
                                     f"level {level}: shift residual {st.residual:.2e}")
        stages.append(st)
    freqs = pair_frequencies(stages, dims, strict=strict)
    weights = atom_weights(gen, freqs)
    if np.any(weights <= 0):
        if strict:
            raise DecompositionError("nonpositive_weight", f"weights {weights}")
        weights = np.clip(weights, np.finfo(float).tiny, None)
    return VandermondeDecomposition(dims, freqs, weights)


def atom_weights(gen: MLTGenerator, freqs: np.ndarray) -> np.ndarray:
    """Least-squares diagonal D in T ~ U D U^H for fixed atoms."""
    u = atom_matrix(gen.dims, freqs)
    u_pinv = np.linalg.pinv(u)
    return np.real(np.diag(u_pinv @ realize(gen) @ u_pinv.conj().T))
