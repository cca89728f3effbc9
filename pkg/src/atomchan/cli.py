"""Command line entry point: simulate, estimate, decompose, check-conditions, benchmark."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import io
from .channel import composite_model, draw_channel
from .geometry import SensingMatrix, compose_sensing, reconstruction_degree
from .harness import ConfigError, ExperimentConfig, run_experiment
from .measurement import build_operator, generate_pilots, observe
from .solver import ANProblem, SolverConfig, check_recovery_conditions, extract_frequencies, solve
from .vandermonde import DecompositionError, decompose

log = logging.getLogger("atomchan")

EXIT_CONFIG = 2


def _selection(text: str | None):
    if text is None or text == "all":
        return "all"
    try:
        sel = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"selection must be 'all' or a JSON list of indices: {exc}") from exc
    if not isinstance(sel, list):
        raise ConfigError("selection must be 'all' or a JSON list of indices")
    return sel


def _sensing(dims, selection) -> SensingMatrix:
    try:
        return SensingMatrix.from_dict({"dims": dims, "selection": _selection(selection)})
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_simulate(args) -> int:
    tx = _sensing(args.tx, args.tx_select)
    rx = _sensing(args.rx, args.rx_select)
    rng = np.random.default_rng(args.seed)
    s_ch, s_pilot, s_noise = rng.spawn(3)
    ch = draw_channel(args.K, tx.source_dims, rx.source_dims, s_ch)
    pilot = generate_pilots(args.alphabet, tx.n, args.P, s_pilot)
    op = build_operator(pilot, compose_sensing(tx, rx), rx.n)
    obs = observe(op, composite_model(ch), args.snr, s_noise, n_paths=args.K)
    io.save_channel(args.out_channel, ch)
    io.save_measurement(args.out_measurement, tx, rx, pilot, obs)
    print(f"wrote {args.out_channel} and {args.out_measurement} (L={op.L}, L_u={op.L_u})")
    return 0


def cmd_estimate(args) -> int:
    op, obs = io.load_measurement(args.measurement)
    cfg = SolverConfig(tol=args.tol, max_iter=args.max_iter, rho=args.rho)
    report = solve(ANProblem.from_observation(op, obs, cfg))
    io.write_json(args.out_report, report.to_dict())
    if report.status == "infeasible":
        log.error("observation is inconsistent with the operator; no frequencies written")
        io.write_frequency_csv(args.out_freqs, np.zeros((op.sensing.source_dims.d, 0)),
                               np.zeros(0, dtype=complex), "gain")
        return 0
    try:
        freqs, gains = extract_frequencies(report, K_known=args.K)
    except DecompositionError as exc:
        log.error("frequency extraction failed: %s", exc)
        freqs, gains = np.zeros((op.sensing.source_dims.d, 0)), np.zeros(0, dtype=complex)
    io.write_frequency_csv(args.out_freqs, freqs, gains, "gain")
    print(f"status={report.status} iterations={report.iterations} objective={report.objective:.6g} "
          f"rank={report.rank_estimate}")
    return 0


def cmd_decompose(args) -> int:
    gen = io.load_generator(args.generator)
    try:
        dec = decompose(gen, rank=args.rank)
    except DecompositionError as exc:
        log.error("decomposition failed: %s", exc)
        io.write_frequency_csv(args.out, np.zeros((gen.dims.d, 0)), np.zeros(0), "weight")
        return 0
    io.write_frequency_csv(args.out, dec.freqs, dec.weights, "weight")
    print(f"wrote {dec.r} atoms to {args.out}")
    return 0


def cmd_check(args) -> int:
    tx = _sensing(args.tx, args.tx_select)
    rx = _sensing(args.rx, args.rx_select)
    comp = compose_sensing(tx, rx)
    op = None
    if args.P is not None:
        pilot = generate_pilots(args.alphabet, tx.n, args.P, args.seed)
        op = build_operator(pilot, comp, rx.n)
    kappa = reconstruction_degree(comp).kappa
    report = check_recovery_conditions(comp.source_dims, args.K, operator=op, kappa=kappa)
    report["dims"] = list(comp.source_dims.dims)
    print(json.dumps(report, indent=2, default=lambda v: v.item() if hasattr(v, "item") else str(v)))
    return 0


def cmd_benchmark(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    records = run_experiment(cfg, args.out, threads=args.threads)
    print(f"wrote {len(records)} rows to {args.out}/{cfg.name}.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="atomchan", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def arrays(sp):
        sp.add_argument("--tx", type=int, nargs="+", default=[4], help="transmit dimension vector")
        sp.add_argument("--rx", type=int, nargs="+", default=[4, 6], help="receive dimension vector")
        sp.add_argument("--tx-select", default="all", help="'all' or JSON list of active elements")
        sp.add_argument("--rx-select", default="all", help="'all' or JSON list of active elements")

    sp = sub.add_parser("simulate", help="draw a channel and a noisy measurement")
    arrays(sp)
    sp.add_argument("--K", type=int, default=3)
    sp.add_argument("--P", type=int, default=6)
    sp.add_argument("--alphabet", default="qpsk", choices=["bpsk", "qpsk", "gauss"])
    sp.add_argument("--snr", type=float, default=None, help="SNR in dB (omit for noiseless)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-channel", default="channel.json")
    sp.add_argument("--out-measurement", default="measurement.json")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="solve the atomic-norm program for a measurement file")
    sp.add_argument("--measurement", required=True)
    sp.add_argument("--K", type=int, default=None, help="known number of paths")
    sp.add_argument("--tol", type=float, default=None)
    sp.add_argument("--max-iter", type=int, default=50_000)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--out-report", default="report.json")
    sp.add_argument("--out-freqs", default="frequencies.csv")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("decompose", help="Vandermonde decomposition of an MLT generator file")
    sp.add_argument("--generator", required=True)
    sp.add_argument("--rank", type=int, default=None)
    sp.add_argument("--out", default="decomposition.csv")
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("check-conditions", help="evaluate the recovery conditions")
    arrays(sp)
    sp.add_argument("--K", type=int, required=True)
    sp.add_argument("--P", type=int, default=None)
    sp.add_argument("--alphabet", default="qpsk", choices=["bpsk", "qpsk", "gauss"])
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("benchmark", help="run a Monte-Carlo sweep from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, io.FormatError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # malformed dimensions, selections or pilot sizes given on the command line
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
