"""Timing signals and iceberg-order purchasing simulation.

A buy signal fires on day t when the forecast for day t+1 is at least
``threshold`` above the reference price of day t. Each signal buys one lot
at the day's close until the shortfall is covered; any remainder is bought
on the final day of the window.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataGapError, DomainError, InsufficientDataError
from .harness import ForecastRecord
from .panel import DatedSeries
from .parallel import parallel_map
from .seeding import generator

DENOMINATORS = ("forecast", "realized")


@dataclass(frozen=True)
class SignalSeries:
    dates: tuple[dt.date, ...]
    delta: np.ndarray
    y: np.ndarray
    threshold: float = 0.02
    model_id: str = ""

    def buy_dates(self) -> list[dt.date]:
        return [d for d, flag in zip(self.dates, self.y) if flag]


@dataclass(frozen=True)
class Buy:
    date: dt.date
    lots: int
    price: float
    cost: float


@dataclass
class TradeLedger:
    buys: list[Buy]
    lot_size: float = 1000.0
    shortfall: float = 20000.0
    forced_completion: bool = False
    ignored_signals: list[dt.date] = field(default_factory=list)

    @property
    def total_cost(self) -> float:
        return float(sum(b.cost for b in self.buys))

    @property
    def lots(self) -> int:
        return sum(b.lots for b in self.buys)


@dataclass(frozen=True)
class StrategyEvaluation:
    total_cost: float
    baseline_mean_cost: float
    reduction_ratio: float
    relative_quantile: float
    trials: int
    seed: int | None = None


def generate_signals(
    forecasts: Sequence[ForecastRecord],
    threshold: float = 0.02,
    denominator: str = "forecast",
) -> SignalSeries:
    """Δ_t = forecast_{t+1} / reference_t − 1 and y_t = [Δ_t ≥ threshold].

    The reference is the day-t forecast by default or the day-t realized
    price with ``denominator="realized"``. The final record yields no signal.
    """
    if denominator not in DENOMINATORS:
        raise ValueError(f"denominator must be one of {DENOMINATORS}")
    recs = list(forecasts)
    for a, b in zip(recs, recs[1:]):
        if not b.date > a.date:
            raise ValueError("forecasts must be in strictly increasing date order")
    dates, deltas = [], []
    for cur, nxt in zip(recs, recs[1:]):
        ref = cur.pv if denominator == "forecast" else cur.rv
        if not ref > 0:
            raise DomainError(f"non-positive reference price on {cur.date.isoformat()}")
        dates.append(cur.date)
        deltas.append(nxt.pv / ref - 1.0)
    delta = np.array(deltas, dtype=np.float64)
    y = (delta >= threshold).astype(np.int8)
    model_id = recs[0].model_id if recs else ""
    return SignalSeries(tuple(dates), delta, y, threshold, model_id)


def _lots_needed(shortfall: float, lot: float) -> int:
    n = shortfall / lot
    if n < 1 or abs(n - round(n)) > 1e-9:
        raise ValueError(f"shortfall {shortfall} must be a positive multiple of lot {lot}")
    return int(round(n))


def iceberg_backtest(
    signals: SignalSeries,
    realized_prices: DatedSeries,
    shortfall: float = 20000.0,
    lot: float = 1000.0,
) -> TradeLedger:
    """Buy one lot at the close on each signal day until the shortfall is met."""
    need = _lots_needed(shortfall, lot)
    if len(realized_prices) == 0:
        raise InsufficientDataError("price window is empty")
    price_of = dict(zip(realized_prices.dates, realized_prices.values))
    buys: list[Buy] = []
    ignored: list[dt.date] = []
    for day, flag in zip(signals.dates, signals.y):
        if not flag:
            continue
        if len(buys) >= need:
            ignored.append(day)
            continue
        if day not in price_of:
            raise DataGapError(f"no closing price on signal day {day.isoformat()}")
        price = float(price_of[day])
        buys.append(Buy(day, 1, price, lot * price))
    forced = len(buys) < need
    if forced:
        remaining = need - len(buys)
        last_day = realized_prices.dates[-1]
        price = float(realized_prices.values[-1])
        buys.append(Buy(last_day, remaining, price, remaining * lot * price))
    return TradeLedger(buys, lot, shortfall, forced, ignored)


def _trial_cost(args) -> float:
    prices, lots, lot, seed, index = args
    rng = generator(seed, "baseline", index)
    days = rng.choice(prices.size, size=lots, replace=False)
    return float(lot * np.sort(prices[days]).sum())


def random_baseline(
    realized_prices: DatedSeries | np.ndarray,
    trials: int = 1000,
    shortfall: float = 20000.0,
    lot: float = 1000.0,
    seed: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """Cost of buying one lot on each of ``shortfall/lot`` distinct random days, per trial."""
    prices = np.asarray(
        realized_prices.values if isinstance(realized_prices, DatedSeries) else realized_prices,
        dtype=np.float64,
    )
    need = _lots_needed(shortfall, lot)
    if prices.size < need:
        raise InsufficientDataError(f"{need} purchase days needed, window has {prices.size}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    tasks = [(prices, need, lot, seed, i) for i in range(trials)]
    return np.array(parallel_map(_trial_cost, tasks, workers))


def perfect_foresight_cost(realized_prices, shortfall: float = 20000.0, lot: float = 1000.0) -> float:
    prices = np.asarray(getattr(realized_prices, "values", realized_prices), dtype=np.float64)
    need = _lots_needed(shortfall, lot)
    if prices.size < need:
        raise InsufficientDataError(f"{need} purchase days needed, window has {prices.size}")
    return float(lot * np.sort(prices)[:need].sum())


def evaluate_strategy(
    ledger: TradeLedger | float, baseline: Sequence[float], seed: int | None = None
) -> StrategyEvaluation:
    """Saving versus the mean random cost and the share of cheaper random trials."""
    costs = np.asarray(baseline, dtype=np.float64)
    if costs.size == 0:
        raise InsufficientDataError("baseline has no trials")
    total = ledger.total_cost if isinstance(ledger, TradeLedger) else float(ledger)
    mean = float(costs.mean())
    return StrategyEvaluation(
        total_cost=total,
        baseline_mean_cost=mean,
        reduction_ratio=1.0 - total / mean,
        relative_quantile=float(np.count_nonzero(costs < total)) / costs.size,
        trials=int(costs.size),
        seed=seed,
    )
