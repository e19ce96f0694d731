"""Forecast error metrics, model comparison tables and variable importance."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, DomainError, InsufficientDataError
from .garch import GarchSpec
from .harness import (
    FAMILIES,
    DEFAULT_FEATURE_SET,
    FeatureSet,
    ForecastRecord,
    RollConfig,
    rolling_run,
)
from .panel import ObservationPanel
from .rnn import RnnSpec

logger = logging.getLogger(__name__)

METRICS = ("MAE", "MSE", "MAPE", "MSPE", "LL")


@dataclass(frozen=True)
class MetricsReport:
    model_id: str
    window: int
    N: int
    MAE: float
    MSE: float
    MAPE: float
    MSPE: float
    LL: float | None

    def value(self, metric: str) -> float | None:
        return getattr(self, metric)


def compute_metrics(
    records: Sequence[ForecastRecord],
    model_id: str | None = None,
    window: int | None = None,
) -> MetricsReport:
    """MAE, MSE, MAPE (percent), MSPE and LL over ``records``.

    LL is ``None`` (with a warning) when any prediction is non-positive.
    """
    if not records:
        raise InsufficientDataError("metrics need at least one forecast record")
    pv = np.array([r.pv for r in records], dtype=np.float64)
    rv = np.array([r.rv for r in records], dtype=np.float64)
    if not np.all(rv > 0):
        raise DomainError("realized values must be positive")
    err = pv - rv
    ratio = 1.0 - pv / rv
    ll = None
    if np.all(pv > 0):
        ll = float(np.mean((np.log(pv) - np.log(rv)) ** 2))
    else:
        warnings.warn("non-positive prediction: LL not reported", RuntimeWarning, stacklevel=2)
    return MetricsReport(
        model_id=model_id if model_id is not None else records[0].model_id,
        window=window if window is not None else records[0].window,
        N=len(records),
        MAE=float(np.mean(np.abs(err))),
        MSE=float(np.mean(err * err)),
        MAPE=float(100.0 * np.mean(np.abs(ratio))),
        MSPE=float(np.mean(ratio * ratio)),
        LL=ll,
    )


def implementation_only(records: Sequence[ForecastRecord]) -> list[ForecastRecord]:
    return [r for r in records if r.segment == "implementation"]


def _fmt_fixed(v: float | None) -> str:
    return "" if v is None else f"{v:.4f}"


def _fmt_sci(v: float | None) -> str:
    return "" if v is None else f"{v:.2e}"


def comparison_table(reports: Sequence[MetricsReport]) -> list[dict[str, str]]:
    """Rows keyed by (model, window) in family order, then window.

    Fixed four decimals for MAE/MSE/MAPE, scientific notation for MSPE/LL.
    """
    if not reports:
        raise InsufficientDataError("comparison table needs at least one report")
    seen = set()
    for r in reports:
        key = (r.model_id, r.window)
        if key in seen:
            raise ConfigError(f"duplicate comparison row {key}")
        seen.add(key)

    def order(r: MetricsReport):
        fam = FAMILIES.index(r.model_id) if r.model_id in FAMILIES else len(FAMILIES)
        return (fam, r.model_id, r.window)

    return [
        {
            "model": r.model_id,
            "window": str(r.window),
            "MAE": _fmt_fixed(r.MAE),
            "MSE": _fmt_fixed(r.MSE),
            "MAPE": _fmt_fixed(r.MAPE),
            "MSPE": _fmt_sci(r.MSPE),
            "LL": _fmt_sci(r.LL),
        }
        for r in sorted(reports, key=order)
    ]


@dataclass
class ImportanceTable:
    """Error after deleting each variable, with per-metric and average ranks.

    The largest error ranks 1; ties share the lowest rank. ``mean_rank`` is
    the mean of the five metric ranks and ``average_ranking`` ranks those
    means the same way.
    """

    variables: list[str]
    reports: dict[str, MetricsReport]
    ranks: dict[str, dict[str, int]] = field(default_factory=dict)
    mean_rank: dict[str, float] = field(default_factory=dict)
    average_ranking: dict[str, int] = field(default_factory=dict)
    baseline: MetricsReport | None = None

    def ordered(self) -> list[str]:
        return sorted(self.variables, key=lambda v: (self.mean_rank[v], self.variables.index(v)))


def rank_descending(values: Sequence[float]) -> np.ndarray:
    """Rank 1 for the largest value; ties share the minimum rank."""
    arr = np.asarray(values, dtype=np.float64)
    return rankdata(-arr, method="min").astype(int)


def build_importance(reports: dict[str, MetricsReport], baseline: MetricsReport | None = None) -> ImportanceTable:
    variables = list(reports)
    table = ImportanceTable(variables, reports, baseline=baseline)
    per_metric = {}
    for metric in METRICS:
        vals = [reports[v].value(metric) for v in variables]
        if any(x is None for x in vals):
            continue
        per_metric[metric] = rank_descending(vals)
    for i, v in enumerate(variables):
        table.ranks[v] = {m: int(per_metric[m][i]) for m in per_metric}
        table.mean_rank[v] = float(np.mean([per_metric[m][i] for m in per_metric]))
    avg = rankdata([table.mean_rank[v] for v in variables], method="min").astype(int)
    table.average_ranking = {v: int(a) for v, a in zip(variables, avg)}
    return table


def leave_one_out_importance(
    panel: ObservationPanel,
    config: RollConfig,
    features: FeatureSet | None = None,
    spec: RnnSpec | None = None,
    garch_spec: GarchSpec = GarchSpec(),
    gshea: np.ndarray | None = None,
    include_baseline: bool = True,
) -> ImportanceTable:
    """Implementation-segment errors with each feature deleted in turn."""
    features = (features or DEFAULT_FEATURE_SET).for_family(config.family)
    if len(features) < 2:
        raise ConfigError("importance needs at least two features")
    if config.is_hybrid and gshea is None:
        from .harness import gshea_feature

        gshea = gshea_feature(panel, config.garch_window, garch_spec, config.burn_in, config.workers)
    reports = {}
    for code in features.codes:
        recs = rolling_run(panel, config, spec, features.without(code), garch_spec, gshea, segment="implementation")
        reports[code] = compute_metrics(recs, model_id=f"-{code}")
        logger.info("importance: without %s MAE %.4f", code, reports[code].MAE)
    baseline = None
    if include_baseline:
        recs = rolling_run(panel, config, spec, features, garch_spec, gshea, segment="implementation")
        baseline = compute_metrics(recs)
    return build_importance(reports, baseline)
