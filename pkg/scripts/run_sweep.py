"""Run one or more Monte-Carlo sweep configs and print a compact table of the results.

    python3 scripts/run_sweep.py scripts/configs/noiseless.json --out results/noiseless
"""

import argparse
import logging
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from atomchan.harness import ExperimentConfig, run_experiment, snr_label  # noqa: E402


def table(records) -> str:
    lines = [f"{'method':7} {'alph':5} {'P':>2} {'K':>2} {'snr':>5} {'channel_mse':>12} {'freq_mse':>12} "
             f"{'fail':>5}"]
    for r in records:
        fmt = lambda v: "nan" if math.isnan(v) else f"{v:.3e}"  # noqa: E731
        lines.append(f"{r.method:7} {r.alphabet:5} {r.P:>2} {r.K:>2} {snr_label(r.snr_db):>5} "
                     f"{fmt(r.channel_mse):>12} {fmt(r.freq_mse):>12} {r.failures:>3}/{r.trials}")
    return "\n".join(lines)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="+", type=Path)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--trials", type=int, default=None, help="override the trial count (quick looks)")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for path in args.configs:
        cfg = ExperimentConfig.load(path)
        if args.trials is not None:
            cfg.trials = args.trials
        records = run_experiment(cfg, args.out, threads=args.threads)
        print(f"\n== {cfg.name} ({path}) ==")
        print(table(records))
    return 0


if __name__ == "__main__":
    sys.exit(main())
