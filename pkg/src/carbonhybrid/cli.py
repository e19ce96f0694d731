"""Command-line entry point.

Every subcommand reads a JSON config (``--config``) and lets flags override
individual keys. ``pipeline`` runs all stages and writes a manifest that,
together with the input file, fully determines every output.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import platform
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import CarbonHybridError, ConfigError, DataError, DomainError
from .evaluation import (
    METRICS,
    ImportanceTable,
    compute_metrics,
    comparison_table,
    implementation_only,
    leave_one_out_importance,
)
from .garch import GarchSpec, fit_garch
from .harness import (
    FAMILIES,
    DEFAULT_FEATURES,
    RNN_CELLS,
    FeatureSet,
    ForecastRecord,
    RollConfig,
    gshea_feature,
    grid_search,
    plan_rolls,
    recursive_feature_elimination,
    rolling_run,
)
from .panel import TARGET, VARIABLE_CODES, DatedSeries, ObservationPanel, fill_missing, load_panel, write_panel
from .plotting import emit_series_plot
from .rnn import RnnSpec
from .stats import adf_test, arch_lm, descriptive, jarque_bera
from .strategy import (
    SignalSeries,
    TradeLedger,
    evaluate_strategy,
    generate_signals,
    iceberg_backtest,
    perfect_foresight_cost,
    random_baseline,
)
from .synth import synthetic_panel

logger = logging.getLogger("carbonhybrid")

# Keys that never influence results and so stay out of the manifest.
NON_RESULT_KEYS = ("output", "workers")


@dataclass
class RunConfig:
    input: str = ""
    output: str = "out"
    seed: int = 0
    families: tuple[str, ...] = FAMILIES
    windows: tuple[int, ...] = (5, 10, 20)
    n: int = 60
    split: float = 0.70
    garch_window: int = 200
    burn_in: str = "respect"
    warm_start: bool = False
    garch_p: int = 1
    garch_q: int = 1
    garch_R: int = 0
    garch_M: int = 0
    hidden_dim: int = 32
    dropout: float = 0.2
    learning_rate: float = 0.01
    epochs: int = 150
    features: tuple[str, ...] = DEFAULT_FEATURES
    rfe: bool = False
    rfe_start: tuple[str, ...] = VARIABLE_CODES
    rfe_target: int = 19
    tune: bool = False
    grid: dict = field(default_factory=lambda: {
        "dropout": [0.1, 0.2, 0.3], "epochs": [50, 100, 150], "learning_rate": [0.001, 0.01]})
    importance: bool = True
    importance_family: str = "GARCH-GRU"
    whole_sample_metrics: bool = False
    threshold: float = 0.02
    denominator: str = "forecast"
    shortfall: float = 20000.0
    lot: float = 1000.0
    trials: int = 1000
    strategy_days: int = 365
    plots: bool = True
    workers: int = 1

    def __post_init__(self):
        for name in ("families", "windows", "features", "rfe_start"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        unknown = [f for f in self.families if f not in FAMILIES]
        if unknown:
            raise ConfigError(f"unknown model families {unknown}; expected a subset of {FAMILIES}")
        if not self.families:
            raise ConfigError("no model families selected")
        if not self.windows:
            raise ConfigError("no sliding windows selected")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        # Fail fast on invalid roll and network settings.
        self.roll_config(self.families[0], self.windows[0])
        self.rnn_spec()
        self.garch_spec()

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, CarbonHybridError):
                raise
            raise ConfigError(str(exc)) from exc

    def garch_spec(self) -> GarchSpec:
        try:
            return GarchSpec(self.garch_p, self.garch_q, self.garch_R, self.garch_M)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def rnn_spec(self) -> RnnSpec:
        try:
            return RnnSpec(hidden_dim=self.hidden_dim, dropout=self.dropout,
                           learning_rate=self.learning_rate, epochs=self.epochs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def roll_config(self, family: str, n1: int) -> RollConfig:
        # GARCH rolls are sized by garch_window; n1 only has to pass validation.
        if family == "GARCH":
            n1 = self.windows[0]
        return RollConfig(
            family=family, n1=n1, n=self.n, split=self.split, garch_window=self.garch_window,
            burn_in=self.burn_in, warm_start=self.warm_start, seed=self.seed,
            workers=self.workers,
        )

    def model_windows(self, family: str) -> tuple[int, ...]:
        return (self.garch_window,) if family == "GARCH" else self.windows

    def echo(self) -> dict:
        data = dataclasses.asdict(self)
        for key in NON_RESULT_KEYS:
            data.pop(key)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in data.items()}


# ---------------------------------------------------------------- CSV helpers


def _num(value) -> str:
    if value is None:
        return ""
    value = float(value)
    return "NA" if np.isnan(value) else repr(value)


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_forecasts(records: Sequence[ForecastRecord], path: Path) -> Path:
    rows = ((r.model_id, r.window, r.date.isoformat(), _num(r.pv), _num(r.rv), r.segment) for r in records)
    return write_csv(path, ("model", "window", "date", "pv", "rv", "segment"), rows)


def read_forecasts(path: str | Path) -> list[ForecastRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"forecast file not found: {path}")
    out = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"model", "window", "date", "pv", "rv", "segment"}
        if reader.fieldnames is None or not expected <= set(reader.fieldnames):
            raise DataError(f"{path}: forecast columns must include {sorted(expected)}")
        for i, row in enumerate(reader, start=2):
            try:
                out.append(ForecastRecord(
                    dt.date.fromisoformat(row["date"]), float(row["pv"]), float(row["rv"]),
                    row["model"], row["segment"], int(row["window"]),
                ))
            except ValueError as exc:
                raise DataError(f"{path}: row {i}: {exc}") from exc
    return out


def group_records(records: Sequence[ForecastRecord]) -> dict[tuple[str, int], list[ForecastRecord]]:
    groups: dict[tuple[str, int], list[ForecastRecord]] = {}
    for r in records:
        groups.setdefault((r.model_id, r.window), []).append(r)
    return groups


# ---------------------------------------------------------------- stages


def stage_ingest(config: RunConfig) -> tuple[ObservationPanel, ObservationPanel]:
    raw = load_panel(config.input)
    return raw, fill_missing(raw)


def stats_rows(panel: ObservationPanel) -> list[list[str]]:
    """One row per variable: descriptives, JB on levels, ADF on levels and differences, ARCH-LM on differences."""
    rows = []
    for code in panel.codes:
        x = panel[code]
        d = np.diff(x)
        row = [code]
        desc = descriptive(x)
        row += [_num(desc.mean), _num(desc.maximum), _num(desc.minimum), _num(desc.std_dev)]
        for test, series in ((jarque_bera, x), (adf_test, x), (adf_test, d)):
            try:
                res = test(series)
                row += [_num(res.statistic), str(int(res.reject_at_5pct))]
            except (DomainError, DataError) as exc:
                logger.warning("stats: %s on %s skipped: %s", test.__name__, code, exc)
                row += ["", ""]
        try:
            row.append(_num(arch_lm(d).p_value))
        except (DomainError, DataError) as exc:
            logger.warning("stats: arch_lm on %s skipped: %s", code, exc)
            row.append("")
        rows.append(row)
    return rows


STATS_HEADER = ("variable", "mean", "max", "min", "std", "JB", "JB_reject", "ADF_level", "ADF_level_reject",
                "ADF_diff", "ADF_diff_reject", "ARCH_LM_p")


def stage_gshea(panel: ObservationPanel, config: RunConfig) -> np.ndarray:
    return gshea_feature(panel, config.garch_window, config.garch_spec(), config.burn_in, config.workers)


def _rnn_family(config: RunConfig) -> str:
    rnn = [f for f in config.families if f in RNN_CELLS]
    if not rnn:
        raise ConfigError("this stage needs at least one recurrent family")
    return config.importance_family if config.importance_family in rnn else rnn[0]


def stage_rfe(panel, config: RunConfig, gshea):
    family = _rnn_family(config)
    roll = config.roll_config(family, config.windows[0])
    return recursive_feature_elimination(panel, roll, FeatureSet(config.rfe_start), config.rfe_target,
                                         config.rnn_spec(), config.garch_spec(), gshea)


def stage_run(panel, config: RunConfig, gshea, features: FeatureSet) -> tuple[list[ForecastRecord], list[str]]:
    records, plans = [], []
    base = config.rnn_spec()
    for family in config.families:
        for n1 in config.model_windows(family):
            roll = config.roll_config(family, n1)
            plans.append(plan_rolls(len(panel), roll).describe())
            spec = base
            if config.tune and family in RNN_CELLS:
                best = grid_search(panel, roll, config.grid, base, features, config.garch_spec(), gshea).best
                logger.info("%s/%d tuned hyperparameters %s", family, n1, best)
                spec = replace(base, **best)
            records += rolling_run(panel, roll, spec, features, config.garch_spec(), gshea)
    return records, plans


def metric_reports(records, whole_sample: bool = False):
    groups = group_records(records)
    return [compute_metrics(recs if whole_sample else implementation_only(recs), model, window)
            for (model, window), recs in groups.items()]


def metrics_rows(reports):
    table = comparison_table(reports)
    return [[row[k] for k in ("model", "window", *METRICS)] for row in table]


def importance_rows(table: ImportanceTable):
    def fmt(report):
        return [f"{report.MAE:.4f}", f"{report.MSE:.4f}", f"{report.MAPE:.4f}", f"{report.MSPE:.2e}",
                "" if report.LL is None else f"{report.LL:.2e}"]

    values = [[v, *fmt(table.reports[v])] for v in table.variables]
    ranks = [[v, *(str(table.ranks[v].get(m, "")) for m in METRICS), f"{table.mean_rank[v]:.1f}",
              str(table.average_ranking[v])] for v in table.variables]
    return values, ranks


def stage_importance(panel, config: RunConfig, gshea, features: FeatureSet) -> ImportanceTable:
    family = _rnn_family(config)
    roll = config.roll_config(family, config.windows[0])
    return leave_one_out_importance(panel, roll, features, config.rnn_spec(), config.garch_spec(), gshea,
                                    include_baseline=False)


@dataclass
class StrategyOutcome:
    signals: dict[str, SignalSeries]
    ledgers: dict[str, TradeLedger]
    baseline: np.ndarray
    summary: list[list[str]]
    period: tuple[dt.date, dt.date]


def strategy_records(records, config: RunConfig) -> dict[str, list[ForecastRecord]]:
    """One record list per family at its strategy window, over a common final period."""
    groups = group_records(records)
    chosen = {}
    for family in config.families:
        key = (family, config.model_windows(family)[0])
        if key in groups:
            chosen[family] = groups[key]
    if not chosen:
        raise DataError("no forecasts available for the strategy")
    last = min(recs[-1].date for recs in chosen.values())
    start = last - dt.timedelta(days=config.strategy_days - 1)
    start = max([start] + [recs[0].date for recs in chosen.values()])
    return {f: [r for r in recs if start <= r.date <= last] for f, recs in chosen.items()}


def stage_strategy(panel: ObservationPanel, records, config: RunConfig) -> StrategyOutcome:
    by_family = strategy_records(records, config)
    dates = [r.date for r in next(iter(by_family.values()))]
    index = {d: i for i, d in enumerate(panel.dates)}
    missing = [d for d in dates if d not in index]
    if missing:
        raise DataError(f"forecast date {missing[0].isoformat()} not in panel")
    prices = DatedSeries(tuple(dates), np.array([panel[TARGET][index[d]] for d in dates]))
    baseline = random_baseline(prices, config.trials, config.shortfall, config.lot, config.seed, config.workers)
    signals, ledgers, summary = {}, {}, []
    for family, recs in by_family.items():
        sig = generate_signals(recs, config.threshold, config.denominator)
        ledger = iceberg_backtest(sig, prices, config.shortfall, config.lot)
        ev = evaluate_strategy(ledger, baseline, config.seed)
        signals[family], ledgers[family] = sig, ledger
        summary.append([family, _num(ev.total_cost), _num(ev.reduction_ratio), _num(ev.relative_quantile),
                        str(int(ledger.forced_completion)), str(int(sig.y.sum()))])
    mean = float(baseline.mean())
    summary.append(["Random", _num(mean), "0.0", "", "", ""])
    best = perfect_foresight_cost(prices, config.shortfall, config.lot)
    ev = evaluate_strategy(best, baseline, config.seed)
    summary.append(["PerfectForesight", _num(best), _num(ev.reduction_ratio), _num(ev.relative_quantile), "", ""])
    return StrategyOutcome(signals, ledgers, baseline, summary, (dates[0], dates[-1]))


SUMMARY_HEADER = ("strategy", "total_cost", "reduction_ratio", "relative_quantile", "forced_completion",
                  "signal_days")


def write_strategy(outcome: StrategyOutcome, out: Path) -> list[Path]:
    sig_rows, ledger_rows = [], []
    for family, sig in outcome.signals.items():
        sig_rows += [[family, d.isoformat(), _num(x), str(int(y))] for d, x, y in zip(sig.dates, sig.delta, sig.y)]
    for family, ledger in outcome.ledgers.items():
        ledger_rows += [[family, b.date.isoformat(), str(b.lots), _num(b.price), _num(b.cost)] for b in ledger.buys]
    return [
        write_csv(out / "signals.csv", ("model", "date", "delta", "y"), sig_rows),
        write_csv(out / "ledger.csv", ("model", "date", "lots", "price", "cost"), ledger_rows),
        write_csv(out / "baseline.csv", ("trial", "cost"), [[i, _num(c)] for i, c in enumerate(outcome.baseline)]),
        write_csv(out / "summary.csv", SUMMARY_HEADER, outcome.summary),
    ]


def stage_plots(panel, records, out: Path) -> list[Path]:
    paths = list(emit_series_plot(panel.series(TARGET), out / "plots" / "shea", "SHEA closing price", "yuan/ton"))
    for (model, window), recs in group_records(records).items():
        recs = implementation_only(recs) or recs
        dates = tuple(r.date for r in recs)
        overlay = {
            "predicted": DatedSeries(dates, np.array([r.pv for r in recs])),
            "realized": DatedSeries(dates, np.array([r.rv for r in recs])),
        }
        paths += emit_series_plot(overlay, out / "plots" / f"forecast_{model}_{window}",
                                  f"{model} window {window}", "yuan/ton")
    return paths


# ---------------------------------------------------------------- pipeline


class StageError(CarbonHybridError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.exit_code = getattr(cause, "exit_code", 2 if isinstance(cause, FileNotFoundError) else 1)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_pipeline(config: RunConfig) -> Path:
    """Run every stage, writing outputs and ``manifest.json`` under ``config.output``.

    On failure a ``.partial`` marker naming the failed stage is left beside
    whatever outputs were already written.
    """
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / ".partial"
    marker.write_text("running\n")
    written: list[Path] = []
    stage = "ingest"
    try:
        _, panel = stage_ingest(config)
        written.append(write_panel(panel, out / "panel_clean.csv"))

        stage = "stats"
        written.append(write_csv(out / "stats.csv", STATS_HEADER, stats_rows(panel)))

        stage = "gshea"
        needs_gshea = any(f == "GARCH" or f.startswith("GARCH-") for f in config.families)
        gshea = stage_gshea(panel, config) if needs_gshea else None
        if gshea is not None:
            written.append(write_csv(out / "gshea.csv", ("date", "gshea"),
                                     [[d.isoformat(), _num(g)] for d, g in zip(panel.dates, gshea)]))

        features = FeatureSet(config.features)
        if config.rfe:
            stage = "rfe"
            result = stage_rfe(panel, config, gshea)
            features = result.features
            written.append(write_csv(out / "rfe.csv", ("step", "eliminated", "tuning_mse"),
                                     [[i + 1, c, _num(m)] for i, (c, m) in enumerate(result.order)]))

        stage = "run"
        records, plans = stage_run(panel, config, gshea, features)
        written.append(write_forecasts(records, out / "forecasts.csv"))

        stage = "evaluate"
        reports = metric_reports(records, config.whole_sample_metrics)
        written.append(write_csv(out / "metrics.csv", ("model", "window", *METRICS), metrics_rows(reports)))
        if config.importance and any(f in RNN_CELLS for f in config.families):
            values, ranks = importance_rows(stage_importance(panel, config, gshea, features))
            written.append(write_csv(out / "importance.csv", ("variable", *METRICS), values))
            written.append(write_csv(out / "ranking.csv",
                                     ("variable", *(f"rank_{m}" for m in METRICS), "mean_rank", "average_ranking"),
                                     ranks))

        stage = "backtest"
        outcome = stage_strategy(panel, records, config)
        written += write_strategy(outcome, out)

        if config.plots:
            stage = "plot"
            written += stage_plots(panel, records, out)
    except Exception as exc:
        marker.write_text(f"failed at stage {stage}: {exc}\n")
        if isinstance(exc, CarbonHybridError) and not isinstance(exc, StageError):
            raise StageError(stage, exc) from exc
        if isinstance(exc, (FileNotFoundError, ValueError, ArithmeticError)):
            raise StageError(stage, exc) from exc
        raise

    import scipy

    manifest = {
        "config": config.echo(),
        "seed": config.seed,
        "versions": {"carbonhybrid": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "input": {"path": config.input, "sha256": _sha256(Path(config.input))},
        "features": list(features.codes),
        "plans": plans,
        "strategy_period": [outcome.period[0].isoformat(), outcome.period[1].isoformat()],
        "outputs": sorted(str(p.relative_to(out)) for p in written),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    marker.unlink()
    return out


# ---------------------------------------------------------------- argument parsing


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _csv_list(cast):
    def parse(text: str):
        return tuple(cast(x.strip()) for x in text.split(",") if x.strip())

    return parse


OVERRIDES = {
    # flag: (config key, type)
    "seed": int, "families": _csv_list(str), "windows": _csv_list(int), "n": int, "split": float,
    "garch_window": int, "burn_in": str, "epochs": int, "hidden_dim": int, "dropout": float,
    "learning_rate": float, "features": _csv_list(str), "threshold": float, "denominator": str,
    "shortfall": float, "lot": float, "trials": int, "workers": int, "importance_family": str,
    "strategy_days": int, "rfe_target": int,
}
SWITCHES = ("rfe", "tune", "warm_start", "whole_sample_metrics")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of configuration keys")
    for name, cast in OVERRIDES.items():
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=cast, default=None)
    for name in SWITCHES:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, action="store_const", const=True, default=None)
    p.add_argument("--no-importance", dest="importance", action="store_const", const=False, default=None)
    p.add_argument("--no-plots", dest="plots", action="store_const", const=False, default=None)
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="carbonhybrid", description="Hybrid GARCH/recurrent forecasting of carbon prices.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic panel")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=605)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing", type=int, default=6)
    p.add_argument("-v", "--verbose", action="count", default=0)

    for name, help_text in (
        ("ingest", "clean a panel (fill gaps) and write panel_clean.csv"),
        ("stats", "descriptive statistics and diagnostic tests per variable"),
        ("fit-garch", "fit the GARCH model to SHEA log-returns"),
        ("gshea", "rolling GARCH price forecasts"),
        ("rfe", "recursive feature elimination"),
        ("run", "rolling forecasts for the selected families"),
        ("pipeline", "run every stage"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("input", nargs="?")
        p.add_argument("--out", dest="output")
        _add_common(p)

    p = sub.add_parser("evaluate", help="metrics (and optionally importance) from a forecasts file")
    p.add_argument("forecasts")
    p.add_argument("--panel", dest="input")
    p.add_argument("--out", dest="output")
    _add_common(p)

    p = sub.add_parser("signals", help="timing signals from a forecasts file")
    p.add_argument("forecasts")
    p.add_argument("--out", dest="output")
    _add_common(p)

    p = sub.add_parser("backtest", help="iceberg purchasing against the random baseline")
    p.add_argument("forecasts")
    p.add_argument("--panel", dest="input", required=True)
    p.add_argument("--out", dest="output")
    _add_common(p)

    p = sub.add_parser("plot", help="chart a panel column or a model's forecasts")
    p.add_argument("source", help="panel CSV or forecasts CSV")
    p.add_argument("--column", default=TARGET)
    p.add_argument("--model")
    p.add_argument("--window", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    for key in (*OVERRIDES, *SWITCHES, "importance", "plots", "input", "output"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return RunConfig.from_mapping(data)


def _require_input(config: RunConfig) -> None:
    if not config.input:
        raise ConfigError("an input panel path is required")
    if not Path(config.input).exists():
        raise FileNotFoundError(f"input file not found: {config.input}")


def _cmd_pipeline(config: RunConfig, args) -> None:
    _require_input(config)
    print(run_pipeline(config))


def _cmd_ingest(config, args):
    _require_input(config)
    _, panel = stage_ingest(config)
    print(write_panel(panel, Path(config.output) / "panel_clean.csv"))


def _cmd_stats(config, args):
    _require_input(config)
    _, panel = stage_ingest(config)
    print(write_csv(Path(config.output) / "stats.csv", STATS_HEADER, stats_rows(panel)))


def _cmd_fit_garch(config, args):
    _require_input(config)
    _, panel = stage_ingest(config)
    fit = fit_garch(np.diff(np.log(panel[TARGET])), config.garch_spec())
    p = fit.params
    out = Path(config.output)
    rows = [["c1", _num(p.c1)], ["k", _num(p.k)]]
    rows += [[f"A{i}", _num(v)] for i, v in enumerate(p.A, 1)] + [[f"G{i}", _num(v)] for i, v in enumerate(p.G, 1)]
    rows += [[f"ar{i}", _num(v)] for i, v in enumerate(p.ar, 1)] + [[f"ma{i}", _num(v)] for i, v in enumerate(p.ma, 1)]
    rows += [["loglik", _num(fit.loglik)], ["converged", str(int(fit.converged))]]
    print(write_csv(out / "garch_params.csv", ("parameter", "value"), rows))
    path_rows = ([d.isoformat(), _num(e), _num(h)] for d, e, h in zip(panel.dates[1:], fit.residuals, fit.h_path))
    print(write_csv(out / "garch_path.csv", ("date", "residual", "h"), path_rows))


def _cmd_gshea(config, args):
    _require_input(config)
    _, panel = stage_ingest(config)
    g = stage_gshea(panel, config)
    print(write_csv(Path(config.output) / "gshea.csv", ("date", "gshea"),
                    [[d.isoformat(), _num(v)] for d, v in zip(panel.dates, g)]))


def _gshea_if_needed(panel, config):
    if any(f == "GARCH" or f.startswith("GARCH-") for f in config.families):
        return stage_gshea(panel, config)
    return None


def _cmd_rfe(config, args):
    _require_input(config)
    _, panel = stage_ingest(config)
    result = stage_rfe(panel, config, _gshea_if_needed(panel, config))
    print(write_csv(Path(config.output) / "rfe.csv", ("step", "eliminated", "tuning_mse"),
                    [[i + 1, c, _num(m)] for i, (c, m) in enumerate(result.order)]))
    print(",".join(result.features.codes))


def _cmd_run(config, args):
    _require_input(config)
    _, panel = stage_ingest(config)
    records, plans = stage_run(panel, config, _gshea_if_needed(panel, config), FeatureSet(config.features))
    for line in plans:
        logger.info(line)
    print(write_forecasts(records, Path(config.output) / "forecasts.csv"))


def _cmd_evaluate(config, args):
    records = read_forecasts(args.forecasts)
    out = Path(config.output)
    reports = metric_reports(records, config.whole_sample_metrics)
    print(write_csv(out / "metrics.csv", ("model", "window", *METRICS), metrics_rows(reports)))
    if config.input and config.importance:
        _, panel = stage_ingest(config)
        features = FeatureSet(config.features)
        values, ranks = importance_rows(stage_importance(panel, config, _gshea_if_needed(panel, config), features))
        print(write_csv(out / "importance.csv", ("variable", *METRICS), values))
        print(write_csv(out / "ranking.csv",
                        ("variable", *(f"rank_{m}" for m in METRICS), "mean_rank", "average_ranking"), ranks))


def _cmd_signals(config, args):
    records = read_forecasts(args.forecasts)
    rows = []
    for (model, window), recs in group_records(records).items():
        sig = generate_signals(recs, config.threshold, config.denominator)
        rows += [[model, d.isoformat(), _num(x), str(int(y))] for d, x, y in zip(sig.dates, sig.delta, sig.y)]
    print(write_csv(Path(config.output) / "signals.csv", ("model", "date", "delta", "y"), rows))


def _cmd_backtest(config, args):
    _require_input(config)
    records = read_forecasts(args.forecasts)
    present = tuple(f for f in config.families if any(r.model_id == f for r in records))
    config = replace(config, families=present or config.families)
    _, panel = stage_ingest(config)
    for path in write_strategy(stage_strategy(panel, records, config), Path(config.output)):
        print(path)


def _cmd_plot(args):
    source = Path(args.source)
    if not source.exists():
        raise FileNotFoundError(f"input file not found: {source}")
    with source.open(newline="") as fh:
        header = next(csv.reader(fh), [])
    if "pv" in header:
        recs = [r for r in read_forecasts(source)
                if (args.model is None or r.model_id == args.model) and (args.window is None or r.window == args.window)]
        dates = tuple(r.date for r in recs)
        series = {"predicted": DatedSeries(dates, np.array([r.pv for r in recs])),
                  "realized": DatedSeries(dates, np.array([r.rv for r in recs]))}
    else:
        series = load_panel(source).series(args.column)
    for path in emit_series_plot(series, args.out):
        print(path)


COMMANDS = {
    "pipeline": _cmd_pipeline, "ingest": _cmd_ingest, "stats": _cmd_stats, "fit-garch": _cmd_fit_garch,
    "gshea": _cmd_gshea, "rfe": _cmd_rfe, "run": _cmd_run, "evaluate": _cmd_evaluate, "signals": _cmd_signals,
    "backtest": _cmd_backtest,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            print(write_panel(synthetic_panel(args.rows, args.seed, missing_cells=args.missing), args.out))
        elif args.command == "plot":
            _cmd_plot(args)
        else:
            COMMANDS[args.command](load_config(args), args)
    except CarbonHybridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
