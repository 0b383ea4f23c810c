"""Run every section of a config file and print the mean ± std table.

    python3 scripts/sweep.py configs/desk.ini --out runs/desk

Each section gets its own directory with per-seed metrics, summary.csv and
curve.csv (per-iteration return mean/std across seeds, ready for plotting).
"""

import argparse
import logging
from pathlib import Path

from kfoldpg.harness import (ExperimentError, curve_to_csv, emit_curve_data, metric_files,
                             parse_configs, run_experiment)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--only", help="comma-separated section names")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    configs = parse_configs(Path(args.config).read_text(encoding="utf-8"))
    if args.only:
        wanted = set(args.only.split(","))
        configs = {n: c for n, c in configs.items() if n in wanted}

    table = []
    for name, cfg in configs.items():
        out = Path(args.out) / name
        try:
            row = run_experiment(cfg, out, jobs=args.jobs)
        except ExperimentError as exc:
            print(f"{name}: FAILED {exc}")
            continue
        (out / "curve.csv").write_text(curve_to_csv(emit_curve_data(metric_files(out))), encoding="utf-8")
        table.append((name, row))

    print(f"\n{'experiment':<24}{'mode':<20}{'k':>3}  performance")
    for name, row in table:
        print(f"{name:<24}{row.mode:<20}{row.k:>3}  {row.mean_performance:9.2f} ± {row.std_performance:.2f}")


if __name__ == "__main__":
    main()
