"""Atomic-norm channel estimation as a structured SDP, solved by ADMM.

    minimize    (t + tr T) / 2
    subject to  [[T, l], [l^H, t]] PSD,  T multi-level Toeplitz,
                Q l = y                       (noiseless)
                ||Q l - y||^2 <= P N sigma^2  (noisy)

The splitting keeps the structured variables (t, l, MLT coefficients) in one block, where the data
constraint is enforced exactly by projection, and the bordered PSD matrix in the other.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from .channel import atom_matrix
from .geometry import DimensionVector
from .measurement import MeasurementOperator, Observation, check_pilot_conditions
from .mlt import MLTGenerator, project_full, realize
from .vandermonde import DecompositionError, decompose

log = logging.getLogger(__name__)

NOISELESS = "noiseless_equality"
NOISY = "noisy_ball"


@dataclass
class SolverConfig:
    tol: float | None = None  # default 1e-7 noiseless, 1e-6 noisy
    max_iter: int = 50_000
    rho: float = 1.0
    balance_factor: float = 10.0
    rank_tol: float = 1e-6
    init_seed: int | None = None
    infeasible_tol: float = 1e-9
    relaxation: float = 1.0  # over-relaxation factor in (0, 2)

    def resolved_tol(self, mode: str) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-7 if mode == NOISELESS else 1e-6


@dataclass
class ANProblem:
    operator: MeasurementOperator
    y: Observation
    dims: DimensionVector
    mode: str = NOISELESS
    noise_bound: float = 0.0
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.dims = DimensionVector.of(self.dims)
        if self.mode not in (NOISELESS, NOISY):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == NOISELESS and self.noise_bound != 0:
            raise ValueError("noiseless mode requires noise_bound = 0")
        if self.dims.total() != self.operator.L_u:
            raise ValueError("dimension vector does not match the operator")
        if self.y.y.shape[0] != self.operator.L:
            raise ValueError("observation length does not match the operator")

    @classmethod
    def from_observation(cls, operator, obs: Observation, config: SolverConfig | None = None):
        """Noiseless problem when the observation is noise-free, noise-ball problem otherwise."""
        dims = operator.sensing.source_dims
        if obs.noise_variance > 0:
            return cls(operator, obs, dims, NOISY, obs.noise_variance, config or SolverConfig())
        return cls(operator, obs, dims, NOISELESS, 0.0, config or SolverConfig())


@dataclass
class SolveReport:
    l_u_hat: np.ndarray
    T_hat: MLTGenerator
    t_hat: float
    objective: float
    rank_estimate: int
    primal_residual: float
    dual_residual: float
    iterations: int
    status: str
    runtime: float = 0.0
    lower_bound: float | None = None
    state: "ADMMState | None" = field(default=None, repr=False)

    def bordered(self) -> np.ndarray:
        t = realize(self.T_hat)
        n = t.shape[0]
        out = np.empty((n + 1, n + 1), dtype=complex)
        out[:n, :n] = t
        out[:n, n] = self.l_u_hat
        out[n, :n] = self.l_u_hat.conj()
        out[n, n] = self.t_hat
        return out

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "t_hat": self.t_hat,
            "rank_estimate": self.rank_estimate,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "iterations": self.iterations,
            "runtime": self.runtime,
            "l_u_hat": [[float(v.real), float(v.imag)] for v in self.l_u_hat],
            "T_hat": {"dims": list(self.T_hat.dims.dims), "records": self.T_hat.records()},
        }


@dataclass
class ADMMState:
    """Splitting variables (PSD block Z, scaled dual U, penalty rho) for warm starts."""

    z: np.ndarray
    u: np.ndarray
    rho: float


class _DataProjector:
    """Euclidean projection onto {l : ||Q l - y||^2 <= radius2} (radius2 = 0: affine set)."""

    def __init__(self, q: np.ndarray, y: np.ndarray, radius2: float, rank_tol: float = 1e-10):
        u, s, vh = np.linalg.svd(q, full_matrices=False)
        keep = s > rank_tol * (s[0] if s.size else 0.0)
        self.s = s[keep]
        self.u = u[:, keep]
        self.vh = vh[keep]
        self.b = self.u.conj().T @ y
        self.perp2 = float(np.linalg.norm(y - self.u @ self.b) ** 2)
        self.radius2 = radius2
        self.slack2 = radius2 - self.perp2

    def __call__(self, l0: np.ndarray) -> np.ndarray:
        a = self.vh @ l0
        if self.radius2 == 0:
            return l0 + self.vh.conj().T @ (self.b / self.s - a)
        e2 = np.abs(self.s * a - self.b) ** 2
        if e2.sum() <= self.slack2:
            return l0
        s2 = self.s ** 2

        def excess(mu):
            return float(np.sum(e2 / (1 + mu * s2) ** 2)) - self.slack2

        hi = 1.0
        while excess(hi) > 0:
            hi *= 4.0
            if hi > 1e30:
                break
        mu = brentq(excess, 0.0, hi, xtol=1e-14 * hi, rtol=1e-13)
        a_new = (a + mu * self.s * self.b) / (1 + mu * s2)
        return l0 + self.vh.conj().T @ (a_new - a)


def _assemble(full_t: np.ndarray, idx: np.ndarray, l: np.ndarray, t: float) -> np.ndarray:
    n = idx.shape[0]
    x = np.empty((n + 1, n + 1), dtype=complex)
    x[:n, :n] = full_t[idx]
    x[:n, n] = l
    x[n, :n] = l.conj()
    x[n, n] = t
    return x


def _psd_part(m: np.ndarray) -> tuple[np.ndarray, float]:
    w, v = np.linalg.eigh(m)
    pos = w > 0
    vp = v[:, pos]
    return (vp * w[pos]) @ vp.conj().T, float(w[0])


class _PSDProjector:
    """Projection onto the PSD cone computing only the smaller of the two eigen-subsets."""

    def __init__(self, n: int):
        self.n = n
        self.n_pos = 0

    def __call__(self, m: np.ndarray) -> np.ndarray:
        m = 0.5 * (m + m.conj().T)
        if self.n_pos <= self.n // 2:
            w, v = eigh(m, driver="evr", subset_by_value=(0.0, np.inf), check_finite=False)
            self.n_pos = w.size
            return (v * w) @ v.conj().T
        w, v = eigh(m, driver="evr", subset_by_value=(-np.inf, 0.0), check_finite=False)
        self.n_pos = self.n - w.size
        return m - (v * w) @ v.conj().T


def _zero_report(dims: DimensionVector, iterations: int = 0) -> SolveReport:
    return SolveReport(np.zeros(dims.total(), dtype=complex), MLTGenerator.zeros(dims), 0.0, 0.0, 0,
                       0.0, 0.0, iterations, "optimal")


def solve(problem: ANProblem, warm_start: ADMMState | None = None) -> SolveReport:
    """Run ADMM on ``problem``; ``warm_start`` reuses the splitting state of a related solve."""
    start = time.perf_counter()
    cfg = problem.config
    dims = problem.dims
    op = problem.operator
    y = np.asarray(problem.y.y, dtype=complex)
    tol = cfg.resolved_tol(problem.mode)
    radius2 = 0.0 if problem.mode == NOISELESS else op.L * problem.noise_bound

    proj = _DataProjector(op.dense(), y, radius2)
    if problem.mode == NOISELESS:
        if proj.perp2 > (cfg.infeasible_tol * max(np.linalg.norm(y), 1.0)) ** 2:
            log.warning("observation outside the range of Q (residual %.3e)", np.sqrt(proj.perp2))
            rep = _zero_report(dims)
            rep.status = "infeasible"
            rep.runtime = time.perf_counter() - start
            return rep
        if not np.any(y):
            rep = _zero_report(dims)
            rep.runtime = time.perf_counter() - start
            return rep
    else:
        if proj.slack2 < 0:
            rep = _zero_report(dims)
            rep.status = "infeasible"
            rep.runtime = time.perf_counter() - start
            return rep
        if np.vdot(y, y).real <= radius2:
            rep = _zero_report(dims)
            rep.runtime = time.perf_counter() - start
            return rep

    from .mlt import _lag_tables  # cached index tables
    idx, counts = _lag_tables(dims.dims)
    n_u = dims.total()
    center = (counts.size - 1) // 2
    size = n_u + 1

    psd = _PSDProjector(size)
    rho = cfg.rho
    alpha = cfg.relaxation
    if not 0.0 < alpha < 2.0:
        raise ValueError("relaxation must lie in (0, 2)")
    if warm_start is not None:
        z, u, rho = warm_start.z.copy(), warm_start.u.copy(), warm_start.rho
    elif cfg.init_seed is None:
        z = np.zeros((size, size), dtype=complex)
        u = np.zeros((size, size), dtype=complex)
    else:
        rng = np.random.default_rng(cfg.init_seed)
        g = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
        z, _ = _psd_part(g @ g.conj().T / size)
        u = np.zeros((size, size), dtype=complex)

    status = "max_iter"
    r_norm = s_norm = np.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        w = z - u
        w_t = w[:n_u, :n_u]
        full_t = project_full(w_t, dims)
        full_t = 0.5 * (full_t + full_t[::-1].conj())
        full_t[center] -= 1.0 / (2 * rho)
        t = float(w[n_u, n_u].real) - 1.0 / (2 * rho)
        l0 = 0.5 * (w[:n_u, n_u] + w[n_u, :n_u].conj())
        l = proj(l0)
        x = _assemble(full_t, idx, l, t)

        z_old = z
        x_hat = x if alpha == 1.0 else alpha * x + (1.0 - alpha) * z_old
        z = psd(x_hat + u)
        u = u + x_hat - z

        r_norm = np.linalg.norm(x - z)
        s_norm = rho * np.linalg.norm(z - z_old)
        eps_pri = size * tol + tol * max(np.linalg.norm(x), np.linalg.norm(z))
        eps_dual = size * tol + tol * rho * np.linalg.norm(u)
        if r_norm <= eps_pri and s_norm <= eps_dual:
            status = "optimal"
            break
        if r_norm > cfg.balance_factor * s_norm:
            rho *= 2.0
            u /= 2.0
        elif s_norm > cfg.balance_factor * r_norm:
            rho /= 2.0
            u *= 2.0

    objective = 0.5 * (t + float(full_t[center].real) * n_u)
    wt = np.linalg.eigvalsh(full_t[idx])
    top = max(wt[-1], np.finfo(float).tiny)
    rank = int(np.sum(wt > cfg.rank_tol * top))
    # Shift T and t by the most negative eigenvalue so the returned point is exactly feasible.
    _, lam_min = _psd_part(x)
    shift = max(0.0, -lam_min)
    full_t[center] += shift
    t += shift
    t_gen = MLTGenerator.from_full(dims, full_t)
    rep = SolveReport(l, t_gen, t, float(objective), rank, float(r_norm), float(s_norm), it, status,
                      state=ADMMState(z, u, rho))
    rep.runtime = time.perf_counter() - start
    log.debug("ADMM %s after %d iterations (r=%.2e, s=%.2e, rho=%.3g)", status, it, r_norm, s_norm, rho)
    return rep


def extract_frequencies(report: SolveReport, K_known: int | None = None, strict: bool | None = None):
    """Frequencies from the Vandermonde decomposition of T_hat and gains by least squares on l_u_hat.

    Returns ``(freqs, gains)`` with freqs of shape (d, r). Without ``K_known`` the estimated rank
    must satisfy rank < L_d. With ``K_known`` the decomposition is forced to that many atoms and
    runs non-strictly, so K >= L_d yields an estimate that carries no uniqueness guarantee.
    """
    if report.status == "infeasible":
        raise ValueError("cannot extract frequencies from an infeasible solve")
    rank = K_known if K_known is not None else report.rank_estimate
    dims = report.T_hat.dims
    if K_known is None and rank >= dims[-1]:
        raise DecompositionError("inadmissible", f"rank {rank} must be below L_d = {dims[-1]}")
    if rank < 1 or report.rank_estimate < 1:
        raise DecompositionError("zero_rank", "solution has numerically zero rank")
    if strict is None:
        strict = K_known is None
    dec = decompose(report.T_hat, rank=rank, strict=strict)
    u = atom_matrix(dims, dec.freqs)
    gains, *_ = np.linalg.lstsq(u, report.l_u_hat, rcond=None)
    return dec.freqs, gains


def atomic_norm_value(report: SolveReport) -> float:
    return report.objective


def check_recovery_conditions(dims, K: int, operator: MeasurementOperator | None = None,
                              kappa: int | None = None, report: SolveReport | None = None) -> dict:
    """Structural recovery conditions for K paths on the composite array ``dims``.

    ``kappa`` defaults to the reconstruction degree of the operator's composite sensing matrix.
    With a ``report``, the post-hoc variants substitute rank(T_hat) for K.
    """
    from .geometry import reconstruction_degree

    dims = DimensionVector.of(dims)
    d = dims.d
    if kappa is None:
        kappa = reconstruction_degree(operator.sensing).kappa if operator is not None else sum(dims.dims)
    out = {
        "K": K,
        "kappa": kappa,
        "last_dim_exceeds_K": dims[-1] > K,
        "sum_dims_condition": sum(dims.dims) >= 2 * K + (d - 1),
        "kappa_condition": kappa >= 2 * K + (d - 1),
    }
    if operator is not None:
        pilot = check_pilot_conditions(operator.pilot) if max(operator.pilot.entries.shape) <= 8 else {
            "has_left_pseudo_inverse": operator.pilot.P >= operator.pilot.M
            and operator.pilot.rank() == operator.pilot.M,
            "krank": None,
        }
        out["pilot_left_pseudo_inverse"] = pilot["has_left_pseudo_inverse"]
        out["pilot_krank"] = pilot["krank"]
        out["pilot_krank_condition"] = pilot["krank"] is not None and pilot["krank"] == operator.pilot.P \
            and operator.pilot.P > 2 * K
    structural = out["last_dim_exceeds_K"] and out["sum_dims_condition"] and out["kappa_condition"]
    out["structural"] = bool(structural)
    if report is not None:
        r = report.rank_estimate
        out["rank_T"] = r
        out["posthoc_sum_dims"] = dims[-1] > r and sum(dims.dims) > 2 * r + (d - 1)
        out["posthoc_kappa"] = dims[-1] > r and kappa > 2 * r + (d - 1)
    return out
