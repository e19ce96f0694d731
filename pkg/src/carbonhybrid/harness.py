"""Rolling retrain-and-predict loop for the six forecaster families.

Sample layout: sample ``k`` holds the feature rows ``k .. k+n1-1`` and the
SHEA price of row ``k+n1`` as target. A roll that predicts day ``d`` trains
on the samples whose targets fall in the ``n`` days ``d-n .. d-1`` (that is
``n - n1`` samples) and predicts from rows ``d-n1 .. d-1``. A panel of ``N``
rows therefore yields ``N - n`` rolls.

GSHEA is row-aligned with what is known at the close of each day: row ``t``
holds the GARCH price forecast for day ``t+1`` built from prices up to and
including day ``t``.
"""

from __future__ import annotations

import datetime as dt
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InsufficientDataError, SchemaError
from .garch import GarchSpec, garch_price_forecasts
from .panel import TARGET, VARIABLE_CODES, ObservationPanel
from .parallel import parallel_map
from .rnn import RnnModel, RnnSpec, predict, train
from .seeding import derive_seed

logger = logging.getLogger(__name__)

FAMILIES = ("GARCH", "MA", "GRU", "LSTM", "GARCH-GRU", "GARCH-LSTM")
HYBRID_CELLS = {"GARCH-GRU": "GRU", "GARCH-LSTM": "LSTM"}
RNN_CELLS = {"GRU": "GRU", "LSTM": "LSTM", **HYBRID_CELLS}
DEFAULT_ELIMINATED = ("FOB", "WIRED", "SZGY", "PM")
DEFAULT_FEATURES = tuple(c for c in VARIABLE_CODES if c not in DEFAULT_ELIMINATED)
SEGMENTS = ("tuning", "implementation")
BURN_IN_MODES = ("respect", "naive")


@dataclass(frozen=True)
class RollConfig:
    """Rolling-forecast settings.

    ``n`` counts days per training set, ``n1`` days per input window.
    ``burn_in="respect"`` starts hybrid families where the first full GARCH
    window exists; ``"naive"`` fills the burn-in rows of GSHEA with the
    same day's close (a random-walk forecast) so hybrids roll over the
    whole panel.
    """

    family: str = "GARCH-GRU"
    n1: int = 5
    n: int = 60
    split: float = 0.70
    garch_window: int = 200
    burn_in: str = "respect"
    warm_start: bool = False
    allowed_windows: tuple[int, ...] = (5, 10, 20)
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}; expected one of {FAMILIES}")
        if self.allowed_windows and self.n1 not in self.allowed_windows:
            raise ConfigError(f"sliding window n1={self.n1} not in {self.allowed_windows}")
        if self.n1 < 1:
            raise ConfigError("n1 must be >= 1")
        if not 0.0 < self.split < 1.0:
            raise ConfigError("split must lie strictly between 0 and 1")
        if self.n <= self.n1:
            raise ConfigError(f"training days n={self.n} must exceed n1={self.n1}")
        if self.burn_in not in BURN_IN_MODES:
            raise ConfigError(f"burn_in must be one of {BURN_IN_MODES}")

    @property
    def is_hybrid(self) -> bool:
        return self.family in HYBRID_CELLS

    @property
    def window(self) -> int:
        """The window label reported for this family's records."""
        return self.garch_window if self.family == "GARCH" else self.n1


@dataclass(frozen=True)
class FeatureSet:
    codes: tuple[str, ...]
    target: str = TARGET

    def __post_init__(self):
        object.__setattr__(self, "codes", tuple(self.codes))
        if len(set(self.codes)) != len(self.codes):
            raise ConfigError(f"duplicate feature codes in {self.codes}")
        if "GSHEA" in self.codes and TARGET in self.codes:
            raise ConfigError("SHEA and GSHEA cannot both be inputs")

    def __len__(self) -> int:
        return len(self.codes)

    def for_family(self, family: str) -> "FeatureSet":
        """Swap SHEA for GSHEA on hybrids, drop GSHEA otherwise.

        A hybrid set that already lacks both (GSHEA deleted for an
        importance run) is left alone.
        """
        if family in HYBRID_CELLS:
            return FeatureSet(tuple("GSHEA" if c == TARGET else c for c in self.codes), self.target)
        return FeatureSet(tuple(c for c in self.codes if c != "GSHEA"), self.target)

    def without(self, code: str) -> "FeatureSet":
        if code not in self.codes:
            raise SchemaError(f"feature {code} not in set")
        return FeatureSet(tuple(c for c in self.codes if c != code), self.target)

    def check_family(self, family: str) -> None:
        if not self.codes:
            raise ConfigError("feature set is empty")
        if "GSHEA" in self.codes and family not in HYBRID_CELLS:
            raise ConfigError(f"GSHEA is only an input for hybrid families, not {family}")
        if family in HYBRID_CELLS and TARGET in self.codes:
            raise ConfigError("hybrid families take GSHEA in place of SHEA")


DEFAULT_FEATURE_SET = FeatureSet(DEFAULT_FEATURES)


@dataclass(frozen=True)
class ForecastRecord:
    date: dt.date
    pv: float
    rv: float
    model_id: str
    segment: str
    window: int

    def __post_init__(self):
        if not self.rv > 0:
            raise ValueError(f"realized value must be positive on {self.date}")
        if self.segment not in SEGMENTS:
            raise ValueError(f"unknown segment {self.segment!r}")


@dataclass(frozen=True)
class RollPlan:
    family: str
    window: int
    panel_rows: int
    first_row: int
    first_day: int
    n_rolls: int
    n_tuning: int

    @property
    def n_implementation(self) -> int:
        return self.n_rolls - self.n_tuning

    def describe(self) -> str:
        return (
            f"{self.family}/{self.window}: {self.panel_rows} rows, usable from row {self.first_row}, "
            f"first forecast row {self.first_day}; rolls = {self.panel_rows} - {self.first_day} = "
            f"{self.n_rolls} (tuning {self.n_tuning}, implementation {self.n_implementation})"
        )


def tuning_count(n_rolls: int, split: float) -> int:
    return int(math.floor(split * n_rolls + 1e-9))


def plan_rolls(panel_rows: int, config: RollConfig) -> RollPlan:
    """Roll arithmetic for ``config`` on a panel of ``panel_rows`` days."""
    W = config.garch_window
    if config.family == "GARCH":
        first_row, first_day = 0, W
    elif config.family == "MA":
        first_row, first_day = 0, config.n1
    else:
        first_row = W - 1 if (config.is_hybrid and config.burn_in == "respect") else 0
        first_day = first_row + config.n
    n_rolls = panel_rows - first_day
    if n_rolls < 1:
        raise InsufficientDataError(
            f"{config.family} needs more than {first_day} rows (garch_window={W}, n={config.n}, "
            f"n1={config.n1}); panel has {panel_rows}"
        )
    return RollPlan(config.family, config.window, panel_rows, first_row, first_day, n_rolls,
                    tuning_count(n_rolls, config.split))


def gshea_feature(
    panel: ObservationPanel,
    garch_window: int = 200,
    garch_spec: GarchSpec = GarchSpec(),
    burn_in: str = "respect",
    workers: int = 1,
) -> np.ndarray:
    """Row-aligned GSHEA column (NaN during the burn-in unless ``burn_in='naive'``)."""
    prices = panel[TARGET]
    forecasts, _ = garch_price_forecasts(prices, garch_window, garch_spec, workers, include_next=True)
    out = np.full(len(panel), np.nan)
    out[garch_window - 1 :] = forecasts
    if burn_in == "naive":
        out[: garch_window - 1] = prices[: garch_window - 1]
    return out


def assemble_samples(
    panel: ObservationPanel, features: FeatureSet, n1: int
) -> list[tuple[np.ndarray, float]]:
    """Windowed ``(n1 × |features|, next-day target)`` pairs in row order."""
    for code in (*features.codes, features.target):
        if code not in panel.columns:
            raise SchemaError(f"feature column {code} missing from panel")
    X = np.column_stack([panel[c] for c in features.codes]) if features.codes else np.empty((len(panel), 0))
    y = panel[features.target]
    count = len(panel) - n1
    if count < 1:
        raise InsufficientDataError(f"panel of {len(panel)} rows yields no samples for n1={n1}")
    return [(X[k : k + n1], float(y[k + n1])) for k in range(count)]


def moving_average_forecast(prices, window: int) -> np.ndarray:
    """Forecast for day t (t = window .. len-1) as the mean of the ``window`` prior days."""
    x = np.asarray(prices, dtype=np.float64)
    if window < 1 or window >= x.size:
        raise InsufficientDataError(f"moving-average window {window} needs a longer series than {x.size}")
    return np.array([x[t - window : t].mean() for t in range(window, x.size)])


def _segment_of(i: int, plan: RollPlan) -> str:
    return "tuning" if i < plan.n_tuning else "implementation"


def _selected(plan: RollPlan, segment: str | None) -> range:
    if segment is None:
        return range(plan.n_rolls)
    if segment == "tuning":
        return range(plan.n_tuning)
    if segment == "implementation":
        return range(plan.n_tuning, plan.n_rolls)
    raise ValueError(f"unknown segment {segment!r}")


def _train_predict(task) -> float:
    spec, samples, window = task
    return predict(train(spec, samples), window)


def _roll_seed(config: RollConfig, day: dt.date) -> int:
    return derive_seed(config.seed, "roll", config.family, config.n1, day.toordinal())


def rolling_run(
    panel: ObservationPanel,
    config: RollConfig,
    spec: RnnSpec | None = None,
    features: FeatureSet | None = None,
    garch_spec: GarchSpec = GarchSpec(),
    gshea: np.ndarray | None = None,
    segment: str | None = None,
) -> list[ForecastRecord]:
    """One-day-ahead rolling forecasts for ``config.family``.

    ``gshea`` may carry a precomputed row-aligned GSHEA column (see
    :func:`gshea_feature`) so several families share one set of GARCH fits.
    ``segment`` restricts the work to the tuning or implementation rolls;
    segment labels always come from the full plan.
    """
    prices = panel[TARGET]
    plan = plan_rolls(len(panel), config)
    logger.info(plan.describe())
    wanted = _selected(plan, segment)
    family = config.family

    def record(i: int, row: int, pv: float) -> ForecastRecord:
        return ForecastRecord(panel.dates[row], float(pv), float(prices[row]), family, _segment_of(i, plan), plan.window)

    if family == "MA":
        ma = moving_average_forecast(prices, config.n1)
        return [record(i, plan.first_day + i, ma[i]) for i in wanted]

    needs_garch = family == "GARCH" or config.is_hybrid
    if needs_garch:
        if gshea is None:
            gshea = gshea_feature(panel, config.garch_window, garch_spec, config.burn_in, config.workers)
        elif len(gshea) != len(panel):
            raise SchemaError("precomputed GSHEA length differs from the panel")
    if family == "GARCH":
        return [record(i, plan.first_day + i, gshea[plan.first_day + i - 1]) for i in wanted]

    features = (features or DEFAULT_FEATURE_SET).for_family(family)
    features.check_family(family)
    if config.is_hybrid:
        gcol = np.array(gshea, dtype=np.float64)
        if config.burn_in == "naive":
            nan = np.isnan(gcol)
            gcol[nan] = prices[nan]
        panel = panel.with_columns(GSHEA=gcol)
    sub = panel.slice(plan.first_row)
    samples = assemble_samples(sub, features, config.n1)
    base = replace(spec or RnnSpec(), cell=RNN_CELLS[family], input_dim=len(features))

    n_train = config.n - config.n1
    tasks = []
    for i in wanted:
        day_row = plan.first_day + i
        j = day_row - plan.first_row - config.n  # first training sample
        roll_spec = replace(base, seed=_roll_seed(config, panel.dates[day_row]))
        tasks.append((roll_spec, samples[j : j + n_train], samples[j + n_train][0]))

    if config.warm_start:
        preds, weights = [], None
        for roll_spec, train_samples, window in tasks:
            model: RnnModel = train(roll_spec, train_samples, init=weights)
            weights = model.weights
            preds.append(predict(model, window))
    else:
        preds = parallel_map(_train_predict, tasks, config.workers)
    return [record(i, plan.first_day + i, pv) for i, pv in zip(wanted, preds)]


def records_mse(records: Sequence[ForecastRecord]) -> float:
    if not records:
        raise InsufficientDataError("no records to score")
    return float(np.mean([(r.pv - r.rv) ** 2 for r in records]))


DEFAULT_GRID = {
    "dropout": (0.1, 0.2, 0.3),
    "epochs": (50, 100, 150),
    "learning_rate": (0.001, 0.01),
}


@dataclass
class GridSearchResult:
    best: dict
    evaluations: list[tuple[dict, float]] = field(default_factory=list)


def grid_search(
    panel: ObservationPanel,
    config: RollConfig,
    grid: dict[str, Iterable] | None = None,
    spec: RnnSpec | None = None,
    features: FeatureSet | None = None,
    garch_spec: GarchSpec = GarchSpec(),
    gshea: np.ndarray | None = None,
) -> GridSearchResult:
    """Exhaustive search over dropout × epochs × learning rate on the tuning rolls.

    Ties go to the lower dropout, then fewer epochs, then the lower
    learning rate.
    """
    grid = DEFAULT_GRID if grid is None else grid
    keys = ("dropout", "epochs", "learning_rate")
    axes = [tuple(grid.get(k, ())) for k in keys]
    if any(len(a) == 0 for a in axes):
        raise ConfigError("hyperparameter grid is empty")
    if config.family not in RNN_CELLS:
        raise ConfigError(f"grid search applies to recurrent families, not {config.family}")
    if (config.is_hybrid or config.family == "GARCH") and gshea is None:
        gshea = gshea_feature(panel, config.garch_window, garch_spec, config.burn_in, config.workers)
    base = spec or RnnSpec()
    result = GridSearchResult(best={})
    scored = []
    for combo in itertools.product(*axes):
        params = dict(zip(keys, combo))
        recs = rolling_run(panel, config, replace(base, **params), features, garch_spec, gshea, segment="tuning")
        mse = records_mse(recs)
        result.evaluations.append((params, mse))
        scored.append((mse, combo, params))
    scored.sort(key=lambda s: (s[0], s[1]))
    result.best = scored[0][2]
    return result


@dataclass
class EliminationResult:
    features: FeatureSet
    order: list[tuple[str, float]]


def recursive_feature_elimination(
    panel: ObservationPanel,
    config: RollConfig,
    start_features: FeatureSet | Sequence[str] = VARIABLE_CODES,
    target_count: int = 19,
    spec: RnnSpec | None = None,
    garch_spec: GarchSpec = GarchSpec(),
    gshea: np.ndarray | None = None,
) -> EliminationResult:
    """Drop one feature at a time until ``target_count`` remain.

    At each step every remaining feature is removed in turn, the active
    family is rerun on the tuning rolls, and the feature whose removal
    gives the lowest MSE is eliminated. Ties go to the earlier feature.
    """
    current = start_features if isinstance(start_features, FeatureSet) else FeatureSet(tuple(start_features))
    current = current.for_family(config.family)
    if target_count >= len(current):
        raise ConfigError(f"target_count {target_count} must be below the start count {len(current)}")
    if target_count < 1:
        raise ConfigError("target_count must be >= 1")
    if config.family not in RNN_CELLS:
        raise ConfigError(f"feature elimination needs a recurrent family, not {config.family}")
    if config.is_hybrid and gshea is None:
        gshea = gshea_feature(panel, config.garch_window, garch_spec, config.burn_in, config.workers)
    order: list[tuple[str, float]] = []
    while len(current) > target_count:
        best_code, best_mse = None, math.inf
        for code in current.codes:
            trial = current.without(code)
            recs = rolling_run(panel, config, spec, trial, garch_spec, gshea, segment="tuning")
            mse = records_mse(recs)
            logger.debug("RFE: without %s -> tuning MSE %.6g", code, mse)
            if mse < best_mse:
                best_code, best_mse = code, mse
        current = current.without(best_code)
        order.append((best_code, best_mse))
        logger.info("RFE eliminated %s (tuning MSE %.6g)", best_code, best_mse)
    return EliminationResult(current, order)
