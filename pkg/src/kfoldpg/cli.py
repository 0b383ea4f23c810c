"""Command-line entry point: ``kfoldpg run | summarize | curve``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, ContractError
from .harness import (ExperimentConfig, ExperimentError, MODE_ALIASES, curve_to_csv, emit_curve_data,
                      metric_files, parse_configs, run_experiment, summarize_dir, summary_to_csv)

log = logging.getLogger("kfoldpg")


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    run_cfg = cfg.run
    if args.mode is not None:
        run_cfg = replace(run_cfg, mode=MODE_ALIASES.get(args.mode, args.mode))
    if args.k is not None:
        run_cfg = replace(run_cfg, k=args.k)
    if args.algo is not None:
        run_cfg = replace(run_cfg, algo=args.algo)
    if args.workers is not None:
        run_cfg = replace(run_cfg, workers=args.workers)
    changes = {}
    if args.env is not None:
        changes["env_name"] = args.env
    if args.seeds is not None:
        changes["seeds"] = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    if args.out is not None:
        changes["output_dir"] = args.out
    return replace(cfg, run=run_cfg, **changes)


def cmd_run(args) -> int:
    text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
    configs = parse_configs(text)
    status = 0
    for name, cfg in configs.items():
        cfg = _apply_overrides(cfg, args)
        out = Path(cfg.output_dir)
        if len(configs) > 1:
            out = out / name
        log.info("running %s -> %s", name, out)
        try:
            row = run_experiment(cfg, out, jobs=args.jobs)
        except ExperimentError as exc:
            log.error("%s: %s", name, exc)
            status = 1
            continue
        print(f"{name}: {row.mode} k={row.k} {row.algo} {row.env}: "
              f"{row.mean_performance:.1f} ± {row.std_performance:.1f} ({row.n_seeds} seeds)")
    return status


def cmd_summarize(args) -> int:
    row = summarize_dir(args.dir)
    text = summary_to_csv([row])
    (Path(args.dir) / "summary.csv").write_text(text, encoding="utf-8")
    print(f"{'mode':<20}{'k':>3}  {'algo':<6}{'env':<13}performance (mean ± std, population)")
    print(f"{row.mode:<20}{row.k:>3}  {row.algo:<6}{row.env:<13}"
          f"{row.mean_performance:.1f} ± {row.std_performance:.1f}  [{row.n_seeds} seeds]")
    return 0


def cmd_curve(args) -> int:
    rows = emit_curve_data(metric_files(args.dir))
    text = curve_to_csv(rows)
    out = Path(args.out) if args.out else Path(args.dir) / "curve.csv"
    out.write_text(text, encoding="utf-8")
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kfoldpg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment (all seeds)")
    p.add_argument("--config", help="config file; omitted means all defaults")
    p.add_argument("--mode", choices=["classic", "param", "param-scaled", "grad"])
    p.add_argument("--k", type=int)
    p.add_argument("--algo", choices=["trpo", "tnpg"])
    p.add_argument("--env")
    p.add_argument("--seeds", help="comma-separated, e.g. 0,1,2")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="threads for rollouts and folds")
    p.add_argument("--jobs", type=int, default=1, help="seeds run in parallel processes")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("summarize", help="mean ± std performance of an output directory")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("curve", help="per-iteration mean/std curve CSV")
    p.add_argument("--dir", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_curve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ContractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
