import datetime as dt

import numpy as np
import pytest

from carbonhybrid.panel import ObservationPanel, fill_missing
from carbonhybrid.synth import business_days, synthetic_panel


@pytest.fixture(scope="session")
def raw_panel():
    return synthetic_panel(605, seed=0)


@pytest.fixture(scope="session")
def clean_panel(raw_panel):
    return fill_missing(raw_panel)


def lag_panel(seed: int, rows: int = 100) -> ObservationPanel:
    """SHEA is a noisy one-day lag of TPFQH; PM is noise and CER is constant."""
    rng = np.random.default_rng(seed)
    driver = 50.0 + np.cumsum(rng.standard_normal(rows))
    shea = np.empty(rows)
    shea[0] = driver[0]
    shea[1:] = driver[:-1] + 0.3 * rng.standard_normal(rows - 1)
    return ObservationPanel(
        business_days(dt.date(2020, 1, 1), rows),
        {"SHEA": shea, "TPFQH": driver, "PM": 20.0 + rng.standard_normal(rows), "CER": np.full(rows, 3.0)},
    )


def small_panel(rows: int = 40, seed: int = 1) -> ObservationPanel:
    rng = np.random.default_rng(seed)
    return ObservationPanel(
        business_days(dt.date(2021, 3, 1), rows),
        {
            "SHEA": 40.0 * np.exp(np.cumsum(0.02 * rng.standard_normal(rows))),
            "SZA": 30.0 * np.exp(np.cumsum(0.02 * rng.standard_normal(rows))),
            "EUA": 15.0 * np.exp(np.cumsum(0.02 * rng.standard_normal(rows))),
        },
    )
