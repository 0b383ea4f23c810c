"""Experiment configs, seed sweeps, metric CSVs and summaries.

Config grammar (INI-style, parsed with :mod:`configparser`)::

    # comments start with '#' or ';'
    [experiment-name]        # optional when the file holds a single experiment
    key = value

Keys and defaults:

    mode                 classic | param_kfold | param_kfold_scaled | grad_kfold (grad_kfold)
                         (aliases: param, param-scaled, grad)
    k                    integer >= 1 (1)
    algo                 trpo | tnpg (trpo)
    env                  pointmass2d | lqr1d (pointmass2d)
    gamma                0.99
    horizon              500
    iterations           500
    sample_budget        50000   environment steps per iteration
    delta                0.08    mean-KL trust region radius
    cg_iters             10
    cg_damping           0.1
    backtrack_ratio      0.8
    max_backtracks       10
    baseline_steps       10      ADAM steps per baseline fit
    baseline_minibatch   50
    baseline_lr          0.01
    normalize_advantages false
    workers              1       threads for rollouts and per-fold work
    seeds                0,1,2,3,4
    output_dir           runs

Outputs per experiment directory: ``config.ini``, one ``metrics_seed<s>.csv``
per seed and ``summary.csv``.  Summary standard deviations are population
statistics (divisor n), flagged by the ``std_ddof`` column.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .baseline import FitConfig
from .envs import ENVS, make_env
from .errors import ConfigError, ContractError
from .kfold import ALGOS, MODES, IterationMetrics, RunConfig, performance, run
from .optim import TrustRegionConfig

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("iteration", "avg_return", "mean_kl", "grad_norm", "baseline_loss", "wall_seconds")
SUMMARY_COLUMNS = ("mode", "k", "algo", "env", "n_seeds", "mean_performance", "std_performance", "std_ddof")
CURVE_COLUMNS = ("iteration", "return_mean", "return_std", "kl_mean", "kl_std")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_SECTION = "experiment"

MODE_ALIASES = {"param": "param_kfold", "param-scaled": "param_kfold_scaled", "grad": "grad_kfold",
                "param_scaled": "param_kfold_scaled"}


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig = field(default_factory=RunConfig)
    env_name: str = "pointmass2d"
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    output_dir: str = "runs"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed is required")
        if self.env_name not in ENVS:
            raise ConfigError("env", f"unknown environment {self.env_name!r}; choose from {sorted(ENVS)}")


@dataclass
class SummaryRow:
    mode: str
    k: int
    algo: str
    env: str
    n_seeds: int
    mean_performance: float
    std_performance: float
    std_ddof: int = 0


class ExperimentError(RuntimeError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _seeds(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.replace(" ", "").split(",") if s)


def _mode(text: str) -> str:
    return MODE_ALIASES.get(text.strip(), text.strip())


def _positive(x):
    return x > 0


def _unit(x):
    return 0.0 <= x <= 1.0


# key -> (group, field name, converter, check, requirement)
_KEYS = {
    "mode": ("run", "mode", _mode, lambda x: x in MODES, f"one of {MODES}"),
    "k": ("run", "k", int, lambda x: x >= 1, "k >= 1"),
    "algo": ("run", "algo", str.strip, lambda x: x in ALGOS, f"one of {ALGOS}"),
    "gamma": ("run", "gamma", float, _unit, "0 <= gamma <= 1"),
    "horizon": ("run", "horizon", int, _positive, "positive"),
    "iterations": ("run", "iterations", int, _positive, "positive"),
    "sample_budget": ("run", "sample_budget", int, _positive, "positive"),
    "workers": ("run", "workers", int, _positive, "positive"),
    "normalize_advantages": ("run", "normalize_advantages", _bool, None, ""),
    "delta": ("trust", "delta", float, _positive, "positive"),
    "cg_iters": ("trust", "cg_iters", int, _positive, "positive"),
    "cg_damping": ("trust", "cg_damping", float, lambda x: x >= 0, "non-negative"),
    "backtrack_ratio": ("trust", "backtrack_ratio", float, lambda x: 0 < x < 1, "strictly between 0 and 1"),
    "max_backtracks": ("trust", "max_backtracks", int, _positive, "positive"),
    "baseline_steps": ("fit", "adam_steps", int, _positive, "positive"),
    "baseline_minibatch": ("fit", "minibatch", int, _positive, "positive"),
    "baseline_lr": ("fit", "learning_rate", float, _positive, "positive"),
    "env": ("exp", "env_name", str.strip, lambda x: x in ENVS, f"one of {sorted(ENVS)}"),
    "seeds": ("exp", "seeds", _seeds, bool, "a nonempty comma-separated list"),
    "output_dir": ("exp", "output_dir", str.strip, bool, "nonempty"),
}


def config_from_mapping(values: dict[str, str]) -> ExperimentConfig:
    groups: dict[str, dict] = {"run": {}, "trust": {}, "fit": {}, "exp": {}}
    for key, raw in values.items():
        if key not in _KEYS:
            raise ConfigError(key, "unknown key")
        group, name, conv, check, requirement = _KEYS[key]
        try:
            value = conv(raw)
        except ValueError as exc:
            raise ConfigError(key, f"cannot parse {raw!r}: {exc}") from None
        if check is not None and not check(value):
            raise ConfigError(key, f"{raw!r} is invalid; must be {requirement}")
        groups[group][name] = value
    if groups["run"].get("mode") == "classic" and groups["run"].get("k", 1) != 1:
        raise ConfigError("k", "classic mode requires k = 1")
    try:
        trust = TrustRegionConfig(**groups["trust"])
        fit = FitConfig(**groups["fit"])
        run_cfg = RunConfig(**groups["run"], trust=trust, fit=fit)
    except ContractError as exc:
        # only cross-field constraints remain at this point
        raise ConfigError("sample_budget", str(exc)) from None
    return ExperimentConfig(run=run_cfg, **groups["exp"])


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   default_section="__defaults__")
    cp.optionxform = str
    return cp


def parse_configs(text: str) -> dict[str, ExperimentConfig]:
    """Parse every section; a body without a header is one ``[experiment]`` section."""
    stripped = [ln.strip() for ln in text.splitlines()]
    first = next((ln for ln in stripped if ln and not ln.startswith(("#", ";"))), "")
    if not first.startswith("["):
        text = f"[{DEFAULT_SECTION}]\n" + text
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("syntax", str(exc)) from None
    return {name: config_from_mapping(dict(cp[name])) for name in cp.sections()}


def parse_config(text: str) -> ExperimentConfig:
    configs = parse_configs(text)
    if len(configs) != 1:
        raise ConfigError("sections", f"expected one experiment section, found {len(configs)}")
    return next(iter(configs.values()))


def config_to_mapping(cfg: ExperimentConfig) -> dict[str, str]:
    groups = {"run": cfg.run, "trust": cfg.run.trust, "fit": cfg.run.fit, "exp": cfg}
    out = {}
    for key, (group, name, *_) in _KEYS.items():
        value = getattr(groups[group], name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        out[key] = text
    return out


def serialize_config(cfg: ExperimentConfig, section: str = DEFAULT_SECTION) -> str:
    lines = [f"[{section}]"]
    lines += [f"{k} = {v}" for k, v in config_to_mapping(cfg).items()]
    return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def metrics_to_csv(metrics: Sequence[IterationMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for m in metrics:
        writer.writerow([_fmt(getattr(m, c)) for c in METRIC_COLUMNS])
    return buf.getvalue()


def read_metrics_csv(path) -> list[IterationMetrics]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRIC_COLUMNS:
            raise ContractError(f"{path}: unexpected header {reader.fieldnames}")
        return [IterationMetrics(int(r["iteration"]), *(float(r[c]) for c in METRIC_COLUMNS[1:]))
                for r in reader]


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def metric_filenames(seeds: Sequence[int]) -> list[str]:
    seen: dict[int, int] = {}
    names = []
    for s in seeds:
        n = seen.get(s, 0)
        seen[s] = n + 1
        names.append(f"metrics_seed{s}.csv" if n == 0 else f"metrics_seed{s}-{n}.csv")
    return names


def _run_seed(run_cfg: RunConfig, env_name: str, seed: int) -> list[IterationMetrics]:
    env = make_env(env_name, horizon=run_cfg.horizon)
    return run(replace(run_cfg, seed=seed), env).metrics


def summarize_performances(cfg: ExperimentConfig, perfs: Sequence[float]) -> SummaryRow:
    arr = np.asarray(perfs, dtype=np.float64)
    return SummaryRow(cfg.run.mode, cfg.run.k, cfg.run.algo, cfg.env_name, len(arr),
                      float(arr.mean()), float(arr.std(ddof=0)))


def summary_to_csv(rows: Iterable[SummaryRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in rows:
        d = asdict(row)
        writer.writerow([d[c] if isinstance(d[c], str) else _fmt(d[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, output_dir: Optional[os.PathLike] = None,
                   jobs: int = 1) -> SummaryRow:
    """Run every seed, write per-seed metric CSVs plus ``summary.csv``.

    Raises :class:`ExperimentError` after all seeds finish if any of them failed.
    """
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.ini", serialize_config(cfg))
    names = metric_filenames(cfg.seeds)
    results: dict[int, list[IterationMetrics]] = {}
    failures = []
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            futures = [pool.submit(_run_seed, cfg.run, cfg.env_name, s) for s in cfg.seeds]
            for i, fut in enumerate(futures):
                try:
                    results[i] = fut.result()
                except Exception as exc:  # noqa: BLE001 - reported per seed below
                    failures.append((cfg.seeds[i], exc))
    else:
        for i, s in enumerate(cfg.seeds):
            try:
                results[i] = _run_seed(cfg.run, cfg.env_name, s)
            except Exception as exc:  # noqa: BLE001
                failures.append((s, exc))
    for i, metrics in sorted(results.items()):
        _write(out / names[i], metrics_to_csv(metrics))
        log.info("seed %d: performance %.4f", cfg.seeds[i], performance(metrics))
    if failures:
        detail = "; ".join(f"seed {s}: {exc}" for s, exc in failures)
        raise ExperimentError(f"{len(failures)} seed(s) failed: {detail}")
    row = summarize_performances(cfg, [performance(results[i]) for i in range(len(cfg.seeds))])
    _write(out / "summary.csv", summary_to_csv([row]))
    return row


def metric_files(directory) -> list[Path]:
    return sorted(Path(directory).glob("metrics_seed*.csv"))


def summarize_dir(directory) -> SummaryRow:
    """Recompute the summary row of an experiment directory from its CSVs."""
    directory = Path(directory)
    files = metric_files(directory)
    if not files:
        raise ContractError(f"no metrics_seed*.csv files in {directory}")
    cfg_path = directory / "config.ini"
    cfg = parse_config(cfg_path.read_text(encoding="utf-8")) if cfg_path.exists() else ExperimentConfig()
    return summarize_performances(cfg, [performance(read_metrics_csv(f)) for f in files])


def emit_curve_data(paths: Sequence[os.PathLike]) -> list[dict]:
    """Per-iteration mean and population std of return and KL across seeds."""
    if not paths:
        raise ContractError("need at least one metrics file")
    runs = [read_metrics_csv(p) for p in paths]
    lengths = {len(r) for r in runs}
    if len(lengths) != 1:
        raise ContractError(f"metric files have different iteration counts: {sorted(lengths)}")
    rows = []
    for i in range(lengths.pop()):
        its = {r[i].iteration for r in runs}
        if len(its) != 1:
            raise ContractError(f"row {i}: iteration indices disagree across files")
        ret = np.array([r[i].avg_return for r in runs])
        kl = np.array([r[i].mean_kl for r in runs])
        rows.append({"iteration": its.pop(), "return_mean": float(ret.mean()), "return_std": float(ret.std()),
                     "kl_mean": float(kl.mean()), "kl_std": float(kl.std())})
    return rows


def curve_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in CURVE_COLUMNS])
    return buf.getvalue()
