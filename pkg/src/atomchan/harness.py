"""Monte-Carlo experiment driver: channel and frequency MSE across pilots, sparsity and SNR."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import baselines
from .channel import composite_model, draw_channel
from .geometry import SensingMatrix, compose_sensing, reconstruction_degree, torus_distance
from .measurement import build_operator, generate_pilots, observe
from .solver import ANProblem, SolverConfig, check_recovery_conditions, extract_frequencies, solve
from .vandermonde import DecompositionError

log = logging.getLogger(__name__)

METHODS = ("an", "omp", "music", "lmmse", "ls")
CSV_COLUMNS = ("method", "alphabet", "P", "K", "snr_db", "channel_mse", "freq_mse", "trials", "failures")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    tx_dims: list[int] = field(default_factory=lambda: [4])
    rx_dims: list[int] = field(default_factory=lambda: [4, 6])
    tx_selection: str | list[int] = "all"
    rx_selection: str | list[int] = "all"
    K: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    alphabets: list[str] = field(default_factory=lambda: ["qpsk"])
    P: list[int] = field(default_factory=lambda: [6])
    snr_db: list[float | None] = field(default_factory=lambda: [None])
    trials: int = 200
    methods: list[str] = field(default_factory=lambda: ["an"])
    seed: int = 0
    name: str = "experiment"
    solver_tol: float | None = None
    solver_max_iter: int = 50_000
    max_dict: int = baselines.DEFAULT_MAX_DICT

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if not self.K or min(self.K) < 1:
            raise ConfigError("K list must be nonempty with K >= 1")
        if not self.P or min(self.P) < 1:
            raise ConfigError("P list must be nonempty with P >= 1")
        if not self.snr_db:
            raise ConfigError("snr_db list must be nonempty (use null for noiseless)")
        self.snr_db = [_parse_snr(s) for s in self.snr_db]
        for a in self.alphabets:
            if a not in ("bpsk", "qpsk", "gauss"):
                raise ConfigError(f"unknown alphabet {a!r}")

    def tx_sensing(self) -> SensingMatrix:
        return SensingMatrix.from_dict({"dims": self.tx_dims, "selection": self.tx_selection})

    def rx_sensing(self) -> SensingMatrix:
        return SensingMatrix.from_dict({"dims": self.rx_dims, "selection": self.rx_selection})

    def solver_config(self) -> SolverConfig:
        return SolverConfig(tol=self.solver_tol, max_iter=self.solver_max_iter)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        if data.get("noiseless"):
            raise ConfigError("use snr_db: [null] for noiseless sweeps")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


def _parse_snr(s):
    if s is None:
        return None
    if isinstance(s, str):
        if s.lower() in ("inf", "noiseless", "none"):
            return None
        s = float(s)
    s = float(s)
    return None if math.isinf(s) else s


def snr_label(snr) -> str:
    return "inf" if snr is None else f"{snr:g}"


@dataclass
class TrialOutcome:
    method: str
    alphabet: str
    P: int
    K: int
    snr_db: float | None
    trial: int
    channel_se: float
    freq_se: float
    failed: bool
    runtime: float
    status: str = "ok"


@dataclass
class MetricRecord:
    method: str
    alphabet: str
    P: int
    K: int
    snr_db: float | None
    channel_mse: float
    freq_mse: float
    trials: int
    failures: int
    runtime: float = 0.0

    def row(self) -> dict:
        return {
            "method": self.method,
            "alphabet": self.alphabet,
            "P": self.P,
            "K": self.K,
            "snr_db": snr_label(self.snr_db),
            "channel_mse": repr(self.channel_mse),
            "freq_mse": repr(self.freq_mse),
            "trials": self.trials,
            "failures": self.failures,
        }


def match_frequencies(truth: np.ndarray, estimate: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Optimal assignment under the squared wrap-around distance summed over coordinates.

    Returns ``(perm, errors)``: estimate column ``perm[k]`` is matched to truth column ``k`` and
    ``errors[k]`` is their squared torus distance.
    """
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    estimate = np.atleast_2d(np.asarray(estimate, dtype=float))
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch {truth.shape} vs {estimate.shape}")
    cost = np.zeros((truth.shape[1], estimate.shape[1]))
    for row_t, row_e in zip(truth, estimate):
        cost += torus_distance(row_t[:, None], row_e[None, :]) ** 2
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(truth.shape[1], dtype=int)
    perm[rows] = cols
    return perm, cost[np.arange(truth.shape[1]), perm]


def freq_mse(truth: np.ndarray, estimate: np.ndarray) -> float:
    """(1/d) mean over paths of the matched squared torus error."""
    _, err = match_frequencies(truth, estimate)
    return float(err.mean() / np.atleast_2d(truth).shape[0])


def ls_channel_estimate(operator, y: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution of Q l = y."""
    sol, *_ = np.linalg.lstsq(operator.dense(), np.asarray(y, dtype=complex), rcond=None)
    return sol


def trial_seeds(seed: int, grid_point: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, grid_point, trial])


def _dictionaries(cfg: ExperimentConfig, dims, K: int) -> dict:
    out = {}
    for method in ("omp", "music"):
        if method in cfg.methods:
            budget = baselines.complexity_budget(method, dims, K, max_length=cfg.max_dict)
            grid = baselines.GridDictionary(dims, budget["grid"])
            out[method] = (grid, grid.atoms() if method == "omp" else None)
    return out


def run_trial(cfg: ExperimentConfig, alphabet: str, P: int, K: int, grid_point: int, trial: int,
              dictionaries: dict | None = None) -> list[TrialOutcome]:
    """One channel/pilot draw evaluated by every method at every SNR of the config."""
    tx, rx = cfg.tx_sensing(), cfg.rx_sensing()
    comp = compose_sensing(tx, rx)
    dims = comp.source_dims
    ss_channel, ss_pilot, ss_noise = trial_seeds(cfg.seed, grid_point, trial).spawn(3)
    ch = draw_channel(K, tx.source_dims, rx.source_dims, np.random.default_rng(ss_channel))
    h = composite_model(ch)
    pilot = generate_pilots(alphabet, tx.n, P, np.random.default_rng(ss_pilot))
    op = build_operator(pilot, comp, rx.n)
    if dictionaries is None:
        dictionaries = _dictionaries(cfg, dims, K)
    noise_seeds = ss_noise.spawn(len(cfg.snr_db))
    outcomes = []
    for snr, ns in zip(cfg.snr_db, noise_seeds):
        obs = observe(op, h, snr, np.random.default_rng(ns), n_paths=K)
        for method in cfg.methods:
            start = time.perf_counter()
            status = "ok"
            f_hat = None
            failed = False
            try:
                if method == "an":
                    rep = solve(ANProblem.from_observation(op, obs, cfg.solver_config()))
                    status = rep.status
                    l_hat = rep.l_u_hat
                    failed = rep.status != "optimal"
                    if not failed:
                        f_hat, _ = extract_frequencies(rep, K_known=K)
                elif method == "omp":
                    grid, atoms = dictionaries["omp"]
                    res = baselines.omp_estimate(op, obs.y, K, grid, atoms)
                    l_hat, f_hat = res.l_u_hat, res.freqs
                elif method == "music":
                    grid, _ = dictionaries["music"]
                    res = baselines.music_estimate(ls_channel_estimate(op, obs.y), dims, K, grid)
                    f_hat = res.freqs
                    _, l_hat = baselines.gains_for_frequencies(op, obs.y, dims, f_hat)
                elif method == "lmmse":
                    l_hat = baselines.lmmse_estimate(op, obs.y, K, obs.noise_variance)
                else:
                    l_hat = ls_channel_estimate(op, obs.y)
            except (DecompositionError, np.linalg.LinAlgError, ValueError) as exc:
                log.warning("trial %d %s K=%d P=%d snr=%s failed: %s", trial, method, K, P,
                            snr_label(snr), exc)
                failed, status, l_hat, f_hat = True, type(exc).__name__, None, None
            runtime = time.perf_counter() - start
            c_se = float(np.sum(np.abs(l_hat - h) ** 2) / dims.total()) if l_hat is not None else math.nan
            f_se = freq_mse(ch.freqs, f_hat) if f_hat is not None else math.nan
            outcomes.append(TrialOutcome(method, alphabet, P, K, snr, trial, c_se, f_se, failed,
                                         runtime, status))
    return outcomes


def grid_points(cfg: ExperimentConfig) -> list[tuple[int, str, int, int]]:
    pts = []
    for alphabet in cfg.alphabets:
        for P in cfg.P:
            for K in cfg.K:
                pts.append((len(pts), alphabet, P, K))
    return pts


def _run_unit(args):
    cfg, gp, alphabet, P, K, trials = args
    dicts = _dictionaries(cfg, compose_sensing(cfg.tx_sensing(), cfg.rx_sensing()).source_dims, K)
    out = []
    for trial in trials:
        out.extend(run_trial(cfg, alphabet, P, K, gp, trial, dicts))
    return out


def run_trials(cfg: ExperimentConfig, threads: int = 1, chunk: int = 10) -> list[TrialOutcome]:
    """Every trial of every grid point; work is split into chunks of trials for the pool."""
    units = []
    for gp, alphabet, P, K in grid_points(cfg):
        for lo in range(0, cfg.trials, chunk):
            units.append((cfg, gp, alphabet, P, K, list(range(lo, min(lo + chunk, cfg.trials)))))
    outcomes: list[TrialOutcome] = []
    if threads <= 1:
        for u in units:
            outcomes.extend(_run_unit(u))
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for res in pool.map(_run_unit, units):
                outcomes.extend(res)
    return outcomes


def aggregate(outcomes: list[TrialOutcome]) -> list[MetricRecord]:
    """Average over successful trials per (method, alphabet, P, K, snr), counting failures."""
    groups: dict[tuple, list[TrialOutcome]] = {}
    for o in outcomes:
        groups.setdefault((o.method, o.alphabet, o.P, o.K, o.snr_db), []).append(o)
    records = []
    for (method, alphabet, P, K, snr), group in groups.items():
        ok = [o for o in group if not o.failed]
        c = [o.channel_se for o in ok]
        f = [o.freq_se for o in ok if not math.isnan(o.freq_se)]
        records.append(MetricRecord(
            method, alphabet, P, K, snr,
            float(np.mean(c)) if c else math.nan,
            float(np.mean(f)) if f else math.nan,
            len(group), len(group) - len(ok),
            float(np.mean([o.runtime for o in group]))))
    return records


def condition_rows(cfg: ExperimentConfig) -> list[dict]:
    comp = compose_sensing(cfg.tx_sensing(), cfg.rx_sensing())
    kappa = reconstruction_degree(comp).kappa
    rows = []
    for K in cfg.K:
        rep = check_recovery_conditions(comp.source_dims, K, kappa=kappa)
        rows.append({k: rep[k] for k in ("K", "kappa", "last_dim_exceeds_K", "sum_dims_condition",
                                         "kappa_condition", "structural")})
    return rows


def write_csv(path, rows: list[dict], columns) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        writer.writerows(rows)


TRIAL_COLUMNS = ("method", "alphabet", "P", "K", "snr_db", "trial", "channel_se", "freq_se", "failed",
                 "runtime", "status")


def write_trials_csv(path, outcomes: list[TrialOutcome]) -> None:
    """Per-trial outcomes; floats are written with repr so a reload is exact."""
    rows = [{**asdict(o), "snr_db": snr_label(o.snr_db), "channel_se": repr(o.channel_se),
             "freq_se": repr(o.freq_se), "runtime": repr(o.runtime)} for o in outcomes]
    write_csv(path, rows, TRIAL_COLUMNS)


def read_trials_csv(path) -> list[TrialOutcome]:
    with Path(path).open(newline="") as fh:
        return [TrialOutcome(r["method"], r["alphabet"], int(r["P"]), int(r["K"]), _parse_snr(r["snr_db"]),
                             int(r["trial"]), float(r["channel_se"]), float(r["freq_se"]),
                             r["failed"] == "True", float(r["runtime"]), r["status"])
                for r in csv.DictReader(fh)]


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> list[MetricRecord]:
    """Run the sweep; with ``out_dir`` write ``<name>.csv``, conditions and runtimes alongside."""
    conditions = condition_rows(cfg)
    for row in conditions:
        log.info("K=%d conditions: %s", row["K"], row)
    outcomes = run_trials(cfg, threads=threads)
    records = aggregate(outcomes)
    records.sort(key=lambda r: (r.method, r.alphabet, r.P, r.K, math.inf if r.snr_db is None
                                else r.snr_db))
    if out_dir is not None:
        out = Path(out_dir)
        write_csv(out / f"{cfg.name}.csv", [r.row() for r in records], CSV_COLUMNS)
        write_csv(out / f"{cfg.name}_conditions.csv", conditions, list(conditions[0]))
        write_csv(out / f"{cfg.name}_runtime.csv",
                  [{**{k: v for k, v in r.row().items() if k in ("method", "alphabet", "P", "K",
                                                                 "snr_db")},
                    "mean_runtime_s": f"{r.runtime:.6f}"} for r in records],
                  ("method", "alphabet", "P", "K", "snr_db", "mean_runtime_s"))
        (out / f"{cfg.name}_config.json").write_text(json.dumps(asdict(cfg), indent=2))
    return records
