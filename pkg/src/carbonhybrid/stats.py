"""Diagnostic battery for the input panel.

Descriptive statistics, Jarque-Bera normality, augmented Dickey-Fuller
stationarity and Engle's ARCH-LM heteroskedasticity test. All functions are
pure and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .errors import DegenerateSeriesError, InsufficientDataError

JB_CRITICAL_5PCT = 5.99
ADF_CRITICAL_5PCT = -2.86


@dataclass(frozen=True)
class DescriptiveStats:
    mean: float
    maximum: float
    minimum: float
    std_dev: float
    n: int


@dataclass(frozen=True)
class StatTestResult:
    """Outcome of a hypothesis test.

    Exactly one of ``p_value`` / ``critical_value`` is set and that one
    determines ``reject_at_5pct``.
    """

    statistic: float
    p_value: float | None
    critical_value: float | None
    reject_at_5pct: bool
    lags: int | None = None
    nobs: int | None = None


def _as_series(series, min_len: int, what: str) -> np.ndarray:
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.size < min_len:
        raise InsufficientDataError(f"{what} needs at least {min_len} observations, got {x.size}")
    return x


def descriptive(series) -> DescriptiveStats:
    x = _as_series(series, 2, "descriptive statistics")
    return DescriptiveStats(
        mean=float(x.mean()),
        maximum=float(x.max()),
        minimum=float(x.min()),
        std_dev=float(x.std(ddof=1)),
        n=int(x.size),
    )


def chi2_sf(statistic: float, df: int) -> float:
    """Upper tail of the chi-square distribution (regularized upper gamma)."""
    if statistic <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, statistic / 2.0))


def jarque_bera(series) -> StatTestResult:
    x = _as_series(series, 8, "Jarque-Bera")
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 <= 0:
        raise DegenerateSeriesError("Jarque-Bera undefined for a zero-variance series")
    skew = np.mean(d**3) / m2**1.5
    kurt = np.mean(d**4) / m2**2
    stat = jb_statistic(x.size, skew, kurt)
    return StatTestResult(stat, None, JB_CRITICAL_5PCT, stat > JB_CRITICAL_5PCT, nobs=x.size)


def jb_statistic(n: int, skewness: float, kurtosis: float) -> float:
    return float(n / 6.0 * (skewness**2 + (kurtosis - 3.0) ** 2 / 4.0))


def _ols(y: np.ndarray, X: np.ndarray):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    return beta, resid


def default_adf_maxlag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def _lagged_design(dx: np.ndarray, level: np.ndarray, lags: int, nobs: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows for Δx_t = a + b·x_{t-1} + Σ c_i Δx_{t-i}, keeping the last ``nobs`` rows."""
    m = dx.size
    cols = [level[m - nobs :]]
    for i in range(1, lags + 1):
        cols.append(dx[m - nobs - i : m - i])
    cols.append(np.ones(nobs))
    return dx[m - nobs :], np.column_stack(cols)


def adf_test(series, max_lag: int | None = None) -> StatTestResult:
    """Augmented Dickey-Fuller test, constant and no trend.

    The lag order is chosen by AIC among 0..max_lag on a common estimation
    sample; the chosen regression is then refit on its own full sample. The
    statistic is compared with the fixed 5% critical value -2.86.
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    if max_lag is None:
        max_lag = default_adf_maxlag(x.size)
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if x.size <= max_lag + 2 or x.size - max_lag - 1 <= max_lag + 2:
        raise InsufficientDataError(
            f"ADF with max_lag={max_lag} needs more than {max_lag + 2} observations, got {x.size}"
        )
    dx = np.diff(x)
    level = x[:-1]
    if np.ptp(x) == 0:
        raise DegenerateSeriesError("ADF undefined for a constant series")

    nobs = dx.size - max_lag
    best_lag, best_aic = 0, math.inf
    for lag in range(max_lag + 1):
        y, X = _lagged_design(dx, level, lag, nobs)
        _, resid = _ols(y, X)
        ssr = float(resid @ resid)
        llf = -nobs / 2.0 * (math.log(2 * math.pi) + math.log(ssr / nobs) + 1.0)
        aic = -2.0 * llf + 2.0 * X.shape[1]
        if aic < best_aic:
            best_lag, best_aic = lag, aic

    nobs = dx.size - best_lag
    y, X = _lagged_design(dx, level, best_lag, nobs)
    beta, resid = _ols(y, X)
    k = X.shape[1]
    sigma2 = float(resid @ resid) / (nobs - k)
    cov = sigma2 * np.linalg.inv(X.T @ X)
    stat = float(beta[0] / math.sqrt(cov[0, 0]))
    return StatTestResult(stat, None, ADF_CRITICAL_5PCT, stat < ADF_CRITICAL_5PCT, lags=best_lag, nobs=nobs)


def arch_lm(series, lags: int = 12) -> StatTestResult:
    """Engle's LM test for ARCH effects on the demeaned series.

    Squared residuals are regressed on a constant and their first ``lags``
    lags; LM = nobs·R² is referred to chi-square(lags).
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.size <= 2 * lags:
        raise InsufficientDataError(f"ARCH-LM with {lags} lags needs more than {2 * lags} observations")
    e2 = (x - x.mean()) ** 2
    if not e2.any():
        raise DegenerateSeriesError("ARCH-LM undefined for a constant series")
    nobs = e2.size - lags
    y = e2[lags:]
    X = np.column_stack([np.ones(nobs)] + [e2[lags - i : e2.size - i] for i in range(1, lags + 1)])
    _, resid = _ols(y, X)
    tss = float(((y - y.mean()) ** 2).sum())
    if tss == 0:
        raise DegenerateSeriesError("ARCH-LM undefined: squared residuals are constant")
    r2 = 1.0 - float(resid @ resid) / tss
    stat = nobs * r2
    p = chi2_sf(stat, lags)
    return StatTestResult(stat, p, None, p < 0.05, lags=lags, nobs=nobs)
