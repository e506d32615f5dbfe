"""Command-line front end: config-driven runs of the full pipeline.

One INI-style configuration file drives every subcommand; the flags only
select the command, point at the config, and override a handful of run
parameters (seed, output directory, horizon, thread cap). Validation is
fail-closed: unknown sections or keys, malformed values, and internally
inconsistent settings are all rejected with exit code 2 before any data is
read or any file is written. Exit codes: 0 success, 1 computation failure,
2 usage or configuration error. Logs go to stderr; every machine-readable
product goes to a file, and each command prints the paths it wrote on stdout.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import logging
import sys
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import (
    RollingPlan,
    SimSpec,
    ForecastFn,
    emit_report,
    load_report,
    make_benchmark_forecaster,
    make_tensor_forecaster,
    merge_reports,
    rolling_evaluate,
    simulate,
)
from .factor_model import (
    Ranks,
    extract_factors,
    fit_factor_model,
    fitted_values,
    in_sample_mse,
    load_model,
    save_model,
    select_ranks,
)
from .forecast import forecast_factors, forecast_observations
from .panel import (
    CalendarSpec,
    TensorSeries,
    estimate_standardization,
    fold,
    ingest_csv,
    load_tensor_series,
    save_tensor_series,
    standardize,
    write_npz,
)

logger = logging.getLogger("tensorcast.cli")

__all__ = ["ConfigError", "RunConfig", "load_config", "main"]


class ConfigError(Exception):
    """Usage or configuration problem; maps to exit code 2."""


# Every recognized key with its default and help line. The --help epilog is
# generated from this table, so documentation and validation cannot drift.
_SCHEMA: dict[str, dict[str, tuple[str, str]]] = {
    "data": {
        "paths": ("", "comma-separated provider CSV files (ingest input)"),
        "span": ("", "optional hourly span START..END (inclusive) clipped before folding"),
        "archive": ("tensors.npz", "folded-series archive; relative names land in out"),
    },
    "calendar": {
        "periods": ("7,24", "seasonal extents S1,...,SM; 7,24 = day-of-week x hour-of-day"),
        "week_start": ("monday", "weekday whose 00:00 anchors seasonal index zero"),
    },
    "model": {
        "ranks": ("auto", "'auto' or explicit factor counts R,K1,...,KM"),
        "r_max": ("3", "cross-section rank bound for automatic selection"),
        "k_max": ("", "per-mode seasonal rank bounds; empty = min(3, S_j - 1)"),
        "period": ("52", "seasonal period of the per-factor score models"),
        "score_model": ("ar1", "factor score extrapolation: 'ar1' or 'ar_aic'"),
        "max_order": ("5", "maximum AR order when score_model = ar_aic"),
        "archive": ("model.npz", "fitted-model archive; relative names land in out"),
    },
    "forecast": {
        "horizon": ("1", "forecast steps ahead (the --horizon flag overrides)"),
    },
    "backtest": {
        "train_length": ("", "rolling window length in periods (required for backtest)"),
        "horizons": ("1,4,13,26", "evaluation horizons in periods"),
        "normalizer": ("variance", "relative-MSE divisor: 'variance' or 'std'"),
        "benchmarks": ("mfm,vfm,fpca", "baselines to run, any subset of mfm,vfm,fpca"),
        "vfm_components": ("2", "principal components of the vectorized baseline"),
        "vfm_stacked": ("false", "pool all providers into one vectorized panel"),
        "fpca_components": ("auto", "'auto' (95% variance, max 6) or a fixed count"),
        "mfm_day_factors": ("1", "day-mode factors of the matrix baseline"),
        "mfm_hour_factors": ("2", "hour-mode factors of the matrix baseline"),
    },
    "simulate": {
        "dims": ("9,7,24", "synthetic dims N,S1,...,SM"),
        "ranks": ("1,1,2", "synthetic factor counts R,K1,...,KM"),
        "num_periods": ("342", "number of simulated periods"),
        "factor_mean": ("0", "level of every factor coordinate"),
        "amplitudes": ("1", "sinusoid amplitudes, cycled over factor coordinates"),
        "periods": ("52", "sinusoid periods, cycled over factor coordinates"),
        "ar_coefficient": ("0.7", "AR(1) coefficient of the factor innovations"),
        "ar_sd": ("1.0", "AR(1) innovation standard deviation"),
        "nu_sd": ("0.1", "observation noise standard deviation"),
        "eta_sds": ("0", "idiosyncratic shock scale per seasonal level, cycled"),
        "archive": ("sim.npz", "simulated-series archive; relative names land in out"),
        "truth": ("truth.npz", "ground-truth loadings/factors archive"),
    },
    "run": {
        "out": ("out", "output directory for every artifact"),
        "seed": ("0", "seed for all randomness"),
        "threads": ("1", "worker cap; the pipeline currently runs one worker"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Fully parsed and validated run configuration."""

    config_dir: Path
    data_paths: tuple[str, ...]
    span: tuple[str, str] | None
    data_archive: str
    calendar: CalendarSpec
    ranks: Ranks | None
    r_max: int
    k_max: tuple[int, ...] | None
    period: int
    score_model: str
    max_order: int
    model_archive: str
    horizon: int
    train_length: int | None
    horizons: tuple[int, ...]
    normalizer: str
    benchmarks: tuple[str, ...]
    vfm_components: int
    vfm_stacked: bool
    fpca_components: int | None
    mfm_day_factors: int
    mfm_hour_factors: int
    sim_dims: tuple[int, ...]
    sim_ranks: Ranks
    sim_num_periods: int
    sim_factor_mean: float
    sim_amplitudes: tuple[float, ...]
    sim_periods: tuple[int, ...]
    sim_ar_coefficient: float
    sim_ar_sd: float
    sim_nu_sd: float
    sim_eta_sds: tuple[float, ...]
    sim_archive: str
    sim_truth: str
    base_out_dir: Path
    out_dir: Path
    seed: int
    threads: int

    def input_path(self, name: str) -> Path:
        """Input files: relative names resolve against the config location."""
        p = Path(name)
        return p if p.is_absolute() else self.config_dir / p

    def out_path(self, name: str) -> Path:
        """Artifacts: relative names resolve under the output directory."""
        p = Path(name)
        return p if p.is_absolute() else self.out_dir / p


def _parse_int(where: str, raw: str, minimum: int | None = None) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {value}")
    return value


def _parse_float(where: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {raw!r}") from None


def _parse_bool(where: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {raw!r}")


def _split_list(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def _parse_int_list(where: str, raw: str, minimum: int | None = None) -> tuple[int, ...]:
    return tuple(_parse_int(where, item, minimum) for item in _split_list(raw))


def _parse_float_list(where: str, raw: str) -> tuple[float, ...]:
    return tuple(_parse_float(where, item) for item in _split_list(raw))


def _parse_choice(where: str, raw: str, choices: tuple[str, ...]) -> str:
    lowered = raw.strip().lower()
    if lowered not in choices:
        raise ConfigError(f"{where}: must be one of {', '.join(choices)}; got {raw!r}")
    return lowered


def _parse_ranks(where: str, raw: str, periods: tuple[int, ...]) -> Ranks | None:
    if raw.strip().lower() == "auto":
        return None
    counts = _parse_int_list(where, raw, minimum=1)
    if len(counts) != 1 + len(periods):
        raise ConfigError(
            f"{where}: expected {1 + len(periods)} counts R,K1,...,KM for "
            f"{len(periods)} seasonal modes, got {len(counts)}"
        )
    for k, s in zip(counts[1:], periods):
        if k >= s:
            raise ConfigError(f"{where}: seasonal count {k} must be < period extent {s}")
    return Ranks(counts[0], counts[1:])


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a config file; raise ConfigError on any problem."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None

    # Fail closed: any section or key outside the schema is an error.
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {key!r} in section [{section}]")
    if parser.defaults():
        raise ConfigError("a [DEFAULT] section is not supported")

    def get(section: str, key: str) -> str:
        fallback = _SCHEMA[section][key][0]
        return parser.get(section, key, fallback=fallback).strip()

    try:
        calendar = CalendarSpec(
            periods=_parse_int_list("calendar.periods", get("calendar", "periods"), minimum=2),
            week_start=get("calendar", "week_start"),
        )
    except ValueError as exc:
        raise ConfigError(f"calendar: {exc}") from None

    span_raw = get("data", "span")
    span: tuple[str, str] | None = None
    if span_raw:
        parts = [p.strip() for p in span_raw.split("..")]
        if len(parts) != 2 or not all(parts):
            raise ConfigError(f"data.span: expected START..END, got {span_raw!r}")
        span = (parts[0], parts[1])

    k_max_raw = get("model", "k_max")
    k_max: tuple[int, ...] | None = None
    if k_max_raw:
        k_max = _parse_int_list("model.k_max", k_max_raw, minimum=1)
        if len(k_max) != len(calendar.periods):
            raise ConfigError(
                f"model.k_max: expected {len(calendar.periods)} bounds, got {len(k_max)}"
            )
        for k, s in zip(k_max, calendar.periods):
            if k >= s:
                raise ConfigError(f"model.k_max: bound {k} must be < period extent {s}")

    train_raw = get("backtest", "train_length")
    train_length = _parse_int("backtest.train_length", train_raw, minimum=2) if train_raw else None

    horizons = _parse_int_list("backtest.horizons", get("backtest", "horizons"), minimum=1)
    if not horizons:
        raise ConfigError("backtest.horizons: need at least one horizon")
    if len(set(horizons)) != len(horizons):
        raise ConfigError(f"backtest.horizons: duplicate entries in {horizons}")

    bench_tokens = [token.lower() for token in _split_list(get("backtest", "benchmarks"))]
    for token in bench_tokens:
        if token not in ("mfm", "vfm", "fpca"):
            raise ConfigError(f"backtest.benchmarks: unknown baseline {token!r}")
    benchmarks = tuple(name for name in ("mfm", "vfm", "fpca") if name in bench_tokens)

    fpca_raw = get("backtest", "fpca_components")
    fpca_components = (
        None
        if fpca_raw.lower() == "auto"
        else _parse_int("backtest.fpca_components", fpca_raw, minimum=1)
    )

    sim_dims = _parse_int_list("simulate.dims", get("simulate", "dims"), minimum=1)
    if len(sim_dims) < 2:
        raise ConfigError("simulate.dims: need the cross-section and at least one seasonal extent")
    sim_rank_counts = _parse_int_list("simulate.ranks", get("simulate", "ranks"), minimum=1)
    if len(sim_rank_counts) != len(sim_dims):
        raise ConfigError(
            f"simulate.ranks: expected {len(sim_dims)} counts for dims {sim_dims}, "
            f"got {len(sim_rank_counts)}"
        )
    try:
        sim_ranks = Ranks(sim_rank_counts[0], sim_rank_counts[1:])
    except ValueError as exc:
        raise ConfigError(f"simulate.ranks: {exc}") from None

    sim_periods = _parse_int_list("simulate.periods", get("simulate", "periods"), minimum=1)
    if not sim_periods:
        raise ConfigError("simulate.periods: need at least one period")
    sim_amplitudes = _parse_float_list("simulate.amplitudes", get("simulate", "amplitudes"))
    if not sim_amplitudes:
        raise ConfigError("simulate.amplitudes: need at least one amplitude")
    sim_eta_sds = _parse_float_list("simulate.eta_sds", get("simulate", "eta_sds"))
    if not sim_eta_sds:
        raise ConfigError("simulate.eta_sds: need at least one scale")

    out_dir = Path(get("run", "out"))
    if not out_dir.is_absolute():
        out_dir = path.parent / out_dir

    return RunConfig(
        config_dir=path.parent,
        data_paths=tuple(_split_list(get("data", "paths"))),
        span=span,
        data_archive=get("data", "archive"),
        calendar=calendar,
        ranks=_parse_ranks("model.ranks", get("model", "ranks"), calendar.periods),
        r_max=_parse_int("model.r_max", get("model", "r_max"), minimum=1),
        k_max=k_max,
        period=_parse_int("model.period", get("model", "period"), minimum=1),
        score_model=_parse_choice("model.score_model", get("model", "score_model"),
                                  ("ar1", "ar_aic")),
        max_order=_parse_int("model.max_order", get("model", "max_order"), minimum=0),
        model_archive=get("model", "archive"),
        horizon=_parse_int("forecast.horizon", get("forecast", "horizon"), minimum=1),
        train_length=train_length,
        horizons=horizons,
        normalizer=_parse_choice("backtest.normalizer", get("backtest", "normalizer"),
                                 ("variance", "std")),
        benchmarks=benchmarks,
        vfm_components=_parse_int("backtest.vfm_components", get("backtest", "vfm_components"),
                                  minimum=1),
        vfm_stacked=_parse_bool("backtest.vfm_stacked", get("backtest", "vfm_stacked")),
        fpca_components=fpca_components,
        mfm_day_factors=_parse_int("backtest.mfm_day_factors",
                                   get("backtest", "mfm_day_factors"), minimum=1),
        mfm_hour_factors=_parse_int("backtest.mfm_hour_factors",
                                    get("backtest", "mfm_hour_factors"), minimum=1),
        sim_dims=sim_dims,
        sim_ranks=sim_ranks,
        sim_num_periods=_parse_int("simulate.num_periods", get("simulate", "num_periods"),
                                   minimum=2),
        sim_factor_mean=_parse_float("simulate.factor_mean", get("simulate", "factor_mean")),
        sim_amplitudes=sim_amplitudes,
        sim_periods=sim_periods,
        sim_ar_coefficient=_parse_float("simulate.ar_coefficient",
                                        get("simulate", "ar_coefficient")),
        sim_ar_sd=_parse_float("simulate.ar_sd", get("simulate", "ar_sd")),
        sim_nu_sd=_parse_float("simulate.nu_sd", get("simulate", "nu_sd")),
        sim_eta_sds=sim_eta_sds,
        sim_archive=get("simulate", "archive"),
        sim_truth=get("simulate", "truth"),
        base_out_dir=out_dir,
        out_dir=out_dir,
        seed=_parse_int("run.seed", get("run", "seed"), minimum=0),
        threads=_parse_int("run.threads", get("run", "threads"), minimum=1),
    )


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _load_archive(cfg: RunConfig) -> TensorSeries:
    return load_tensor_series(_require_file(cfg.out_path(cfg.data_archive), "data archive"))


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(cfg: RunConfig, args: argparse.Namespace) -> None:
    if not cfg.data_paths:
        raise ConfigError("data.paths is required for ingest")
    paths = [_require_file(cfg.input_path(p), "data file") for p in cfg.data_paths]
    panel = ingest_csv(paths, span=cfg.span)
    ts = fold(panel, cfg.calendar)
    if ts.num_periods == 0:
        raise ValueError("span contains no complete calendar period")
    logger.info("folded into %d periods of shape %s", ts.num_periods, ts.tensor_dims)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    archive = cfg.out_path(cfg.data_archive)
    save_tensor_series(archive, ts)
    print(archive)


def cmd_ranks(cfg: RunConfig, args: argparse.Namespace) -> None:
    ts = _load_archive(cfg)
    xs = standardize(ts, estimate_standardization(ts))
    seasonal = ts.tensor_dims[1:]
    r_max = min(cfg.r_max, ts.tensor_dims[0] - 1)
    k_max = cfg.k_max or tuple(min(3, s - 1) for s in seasonal)
    k_max = tuple(min(k, s - 1) for k, s in zip(k_max, seasonal))
    ranks = select_ranks(xs, r_max, k_max)
    logger.info("eigenvalue-ratio selection with bounds r<=%d, k<=%s", r_max, k_max)
    print(",".join(str(c) for c in (ranks.r, *ranks.k)))


def cmd_fit(cfg: RunConfig, args: argparse.Namespace) -> None:
    ts = _load_archive(cfg)
    if cfg.ranks is not None:
        try:
            cfg.ranks.validate_against(ts.tensor_dims)
        except ValueError as exc:
            raise ConfigError(f"model.ranks: {exc}") from None
    model, factors = fit_factor_model(ts, ranks=cfg.ranks, r_max=cfg.r_max, k_max=cfg.k_max)
    mse = in_sample_mse(ts, fitted_values(factors, model.loadings, model.standardization))
    logger.info("fitted ranks (%d, %s), in-sample mse %.6g", model.ranks.r, model.ranks.k, mse)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    archive = cfg.out_path(cfg.model_archive)
    save_model(archive, model)
    metrics_path = cfg.out_dir / "fit.json"
    metrics = {
        "ranks": [model.ranks.r, *model.ranks.k],
        "in_sample_mse": mse,
        "num_periods": ts.num_periods,
        "providers": list(ts.provider_ids),
    }
    metrics_path.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    print(archive)
    print(metrics_path)


def cmd_forecast(cfg: RunConfig, args: argparse.Namespace) -> None:
    n = args.horizon if args.horizon is not None else cfg.horizon
    if n < 1:
        raise ConfigError(f"horizon must be >= 1, got {n}")
    ts = _load_archive(cfg)
    model = load_model(_require_file(cfg.out_path(cfg.model_archive), "model archive"))
    if model.provider_ids != ts.provider_ids:
        raise ConfigError(
            f"model providers {model.provider_ids} do not match archive {ts.provider_ids}"
        )
    xs = standardize(ts, model.standardization)
    factors = extract_factors(xs, model.loadings)
    ff = forecast_factors(factors, n, period=cfg.period, score_model=cfg.score_model,
                          max_order=cfg.max_order)
    fc = forecast_observations(ff, model.loadings, model.standardization)
    logger.info("forecast %d periods ahead from %d observed", n, ts.num_periods)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    archive = cfg.out_dir / "forecast.npz"
    save_tensor_series(archive, fc)
    csv_path = cfg.out_dir / "forecast.csv"
    _write_forecast_csv(csv_path, fc)
    print(archive)
    print(csv_path)


def _write_forecast_csv(path: Path, fc: TensorSeries) -> None:
    num_seasonal = fc.values.ndim - 2
    starts = np.datetime_as_string(fc.period_starts, unit="h")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["period_start", "provider", *(f"s{j + 1}" for j in range(num_seasonal)), "value"]
        )
        for t in range(fc.values.shape[0]):
            for i, pid in enumerate(fc.provider_ids):
                block = fc.values[t, i]
                for idx in np.ndindex(*block.shape):
                    writer.writerow([starts[t], pid, *idx, repr(float(block[idx]))])


def cmd_backtest(
    cfg: RunConfig,
    args: argparse.Namespace,
    forecasters: dict[str, ForecastFn] | None = None,
) -> None:
    ts = _load_archive(cfg)
    if cfg.train_length is None:
        raise ConfigError("backtest.train_length is required for backtest")
    plan = RollingPlan(train_length=cfg.train_length, horizons=cfg.horizons)
    try:
        plan.validate_for(ts.num_periods)
    except ValueError as exc:
        raise ConfigError(f"backtest: {exc}") from None
    if forecasters is None:
        forecasters = {
            "TFM": make_tensor_forecaster(
                ranks=cfg.ranks, r_max=cfg.r_max, k_max=cfg.k_max, period=cfg.period,
                score_model=cfg.score_model, max_order=cfg.max_order,
            )
        }
        for name in cfg.benchmarks:
            forecasters[name.upper()] = make_benchmark_forecaster(
                name, period=cfg.period, k_day=cfg.mfm_day_factors,
                k_hour=cfg.mfm_hour_factors, r=cfg.vfm_components,
                stacked=cfg.vfm_stacked, ncomp=cfg.fpca_components,
                max_order=cfg.max_order,
            )
    reports = []
    for name, fn in forecasters.items():
        logger.info("backtesting %s over %d windows", name, ts.num_periods - cfg.train_length)
        reports.append(
            rolling_evaluate(fn, ts, plan, model=name, normalizer=cfg.normalizer,
                             metadata={"seed": str(cfg.seed)})
        )
    merged = merge_reports(reports)
    merged.metadata["model"] = ",".join(forecasters)
    paths = emit_report(merged, cfg.out_dir)
    for key in ("csv", "json", "md", "trace"):
        print(paths[key])


def cmd_simulate(cfg: RunConfig, args: argparse.Namespace) -> None:
    try:
        spec = SimSpec(
            dims=cfg.sim_dims,
            ranks=cfg.sim_ranks,
            num_periods=cfg.sim_num_periods,
            factor_mean=cfg.sim_factor_mean,
            amplitudes=cfg.sim_amplitudes,
            periods=cfg.sim_periods,
            ar_coefficient=cfg.sim_ar_coefficient,
            ar_sd=cfg.sim_ar_sd,
            nu_sd=cfg.sim_nu_sd,
            eta_sds=cfg.sim_eta_sds,
            seed=cfg.seed,
        )
    except ValueError as exc:
        raise ConfigError(f"simulate: {exc}") from None
    ts, loadings, factors = simulate(spec)
    logger.info("simulated %d periods of shape %s with seed %d",
                ts.num_periods, ts.tensor_dims, cfg.seed)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    archive = cfg.out_path(cfg.sim_archive)
    save_tensor_series(archive, ts)
    truth_path = cfg.out_path(cfg.sim_truth)
    truth = {
        "lam": loadings.lam,
        "factors": factors.values,
        "period_starts": np.datetime_as_string(factors.period_starts, unit="h"),
        "provider_ids": np.array(factors.provider_ids),
    }
    for j, mat in enumerate(loadings.b):
        truth[f"b{j}"] = mat
    write_npz(truth_path, truth)
    print(archive)
    print(truth_path)


def cmd_report(cfg: RunConfig, args: argparse.Namespace) -> None:
    source = _require_file(cfg.base_out_dir / "report.json", "report")
    report = load_report(source)
    logger.info("re-emitting %d cells from %s", len(report.cells), source)
    paths = emit_report(report, cfg.out_dir)
    for key in ("csv", "json", "md", "trace"):
        print(paths[key])


_COMMANDS = {
    "ingest": cmd_ingest,
    "ranks": cmd_ranks,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "backtest": cmd_backtest,
    "simulate": cmd_simulate,
    "report": cmd_report,
}

_COMMAND_HELP = {
    "ingest": "read provider CSVs, align and fold them, write the series archive",
    "ranks": "print the automatically selected factor counts for the archive",
    "fit": "estimate loadings on the archive and write the model archive",
    "forecast": "forecast ahead from the fitted model; writes .npz and .csv",
    "backtest": "rolling-origin evaluation of the model and enabled baselines",
    "simulate": "draw a synthetic panel and its ground truth from the seed",
    "report": "re-emit report files from a previously written report.json",
}


def _schema_epilog() -> str:
    lines = ["configuration file (INI; every key is optional unless a command needs it):"]
    for section, keys in _SCHEMA.items():
        lines.append(f"  [{section}]")
        for key, (default, help_text) in keys.items():
            shown = default if default else "(empty)"
            lines.append(f"    {key} = {shown}")
            lines.append(f"        {help_text}")
    lines.append("")
    lines.append("relative input paths resolve against the config file's directory;")
    lines.append("relative archive names resolve under the output directory.")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="run configuration file")
    common.add_argument("--horizon", type=int, default=None, metavar="N",
                        help="forecast steps ahead (forecast command)")
    common.add_argument("--threads", type=int, default=None, metavar="K",
                        help="worker cap, overrides [run] threads")
    common.add_argument("--seed", type=int, default=None, metavar="S",
                        help="RNG seed, overrides [run] seed")
    common.add_argument("--out", default=None, metavar="DIR",
                        help="output directory, overrides [run] out")
    common.add_argument("--verbose", action="store_true",
                        help="debug logging on stderr")

    parser = argparse.ArgumentParser(
        prog="tensorcast",
        description="seasonal tensor factor models for hourly panels",
        epilog=_schema_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in _COMMANDS:
        subparsers.add_parser(name, parents=[common], help=_COMMAND_HELP[name])
    return parser


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates: dict[str, object] = {}
    if args.out is not None:
        updates["out_dir"] = Path(args.out)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be >= 0, got {args.seed}")
        updates["seed"] = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        updates["threads"] = args.threads
    if args.horizon is not None and args.horizon < 1:
        raise ConfigError(f"--horizon must be >= 1, got {args.horizon}")
    return dataclasses.replace(cfg, **updates) if updates else cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        if args.verbose:
            traceback.print_exc()
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
