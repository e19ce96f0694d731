"""Synthetic observation panels with the full variable schema.

SHEA follows a GARCH(1,1) log-return process plus a loading on the previous
day's return of a driver covariate, so lagged features carry real predictive
content. The other variables are positive geometric random walks, a few of
them correlated with SHEA. A handful of cells are blanked to exercise the
gap filler.
"""

from __future__ import annotations

import datetime as dt
import math

import numpy as np

from .garch import GarchParams, simulate_garch
from .panel import TARGET, VARIABLE_CODES, ObservationPanel
from .seeding import generator

# Starting levels roughly in the range each market trades at.
START_LEVELS = {
    "SHEA": 37.0, "SZA": 30.0, "GDEA": 15.0,
    "HS300": 3500.0, "BP500": 2500.0, "OY": 60.0, "MY": 55.0,
    "CCI500": 600.0, "YHQ": 3.0, "QY": 7000.0, "FOB": 550.0, "WIRED": 90.0,
    "TRQQH": 3.0, "TPFQH": 600.0, "CER": 0.3, "EUA": 15.0,
    "SZNY": 2000.0, "SZGY": 2500.0, "SZZR": 1800.0, "CKY": 1200.0, "SSZNY": 1500.0, "ZZY": 1000.0,
    "PM": 50.0,
}
DRIVER = "TPFQH"
CORRELATED = ("SZA", "GDEA", "EUA")
SHEA_PARAMS = GarchParams(c1=0.0, k=2e-5, A=(0.10,), G=(0.85,))


def business_days(start: dt.date, count: int) -> tuple[dt.date, ...]:
    out, day = [], start
    while len(out) < count:
        if day.weekday() < 5:
            out.append(day)
        day += dt.timedelta(days=1)
    return tuple(out)


def synthetic_panel(
    rows: int = 605,
    seed: int = 0,
    start: dt.date = dt.date(2016, 11, 28),
    driver_loading: float = 0.6,
    missing_cells: int = 6,
) -> ObservationPanel:
    """A ``rows``-day panel of all variables, with ``missing_cells`` NaN gaps."""
    if rows < 2:
        raise ValueError("rows must be >= 2")
    dates = business_days(start, rows)
    rng = generator(seed, "synth")
    driver_ret = 0.012 * rng.standard_normal(rows)
    garch_ret = simulate_garch(rows, SHEA_PARAMS, generator(seed, "synth", "garch"))
    shea_ret = garch_ret.copy()
    shea_ret[1:] += driver_loading * driver_ret[:-1]
    shea_ret[0] = 0.0
    cols = {TARGET: START_LEVELS[TARGET] * np.exp(np.cumsum(shea_ret))}
    cols[DRIVER] = START_LEVELS[DRIVER] * np.exp(np.cumsum(driver_ret))
    for code in VARIABLE_CODES:
        if code in cols:
            continue
        vol = 0.01 + 0.01 * rng.random()
        noise = vol * rng.standard_normal(rows)
        if code in CORRELATED:
            noise = 0.5 * shea_ret + math.sqrt(0.75) * noise
        noise[0] = 0.0
        cols[code] = START_LEVELS[code] * np.exp(np.cumsum(noise))
    # Gaps go in interior rows of non-target columns.
    others = [c for c in VARIABLE_CODES if c != TARGET]
    for _ in range(missing_cells):
        code = others[int(rng.integers(len(others)))]
        row = int(rng.integers(1, rows - 1))
        cols[code][row] = np.nan
    return ObservationPanel(dates, {c: cols[c] for c in VARIABLE_CODES})
