"""GARCH(p, q) with an ARMA(R, M) conditional mean, Gaussian innovations.

Mean:      r_t = c1 + Σ φ_i r_{t-i} + Σ θ_j ε_{t-j} + ε_t
Variance:  h_t = k + Σ G_i h_{t-i} + Σ A_i ε²_{t-i},   ε_t = u_t √h_t

Estimation is by Gaussian maximum likelihood using a Nelder-Mead simplex in
an unconstrained reparameterization that keeps k > 0, A, G ≥ 0 and
ΣA + ΣG < 1 for every trial point.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import DegenerateSeriesError, DomainError, InsufficientDataError, NonStationaryError
from .parallel import parallel_map

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
MIN_FIT_LENGTH = 50
SIMPLEX_XATOL = 1e-8
SIMPLEX_MAXITER = 2000
# (persistence share on A, on G) for each multi-start; scaled per term count
START_POINTS = ((0.05, 0.90), (0.10, 0.80), (0.20, 0.50))


@dataclass(frozen=True)
class GarchSpec:
    p: int = 1
    q: int = 1
    R: int = 0
    M: int = 0

    def __post_init__(self):
        if self.p < 1 or self.q < 0 or self.R < 0 or self.M < 0:
            raise ValueError(f"invalid GARCH orders {self}")

    @property
    def max_lag(self) -> int:
        return max(self.p, self.q, self.R, self.M)


@dataclass(frozen=True)
class GarchParams:
    c1: float
    k: float
    A: tuple[float, ...]
    G: tuple[float, ...] = ()
    ar: tuple[float, ...] = ()
    ma: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "c1", float(self.c1))
        object.__setattr__(self, "k", float(self.k))
        for name in ("A", "G", "ar", "ma"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    @property
    def persistence(self) -> float:
        return float(sum(self.A) + sum(self.G))

    def check(self, spec: GarchSpec | None = None) -> None:
        values = (self.c1, self.k, *self.A, *self.G, *self.ar, *self.ma)
        if not all(math.isfinite(v) for v in values):
            raise DomainError(f"non-finite GARCH parameter in {self}")
        if self.k <= 0:
            raise DomainError(f"variance constant must be positive, got k={self.k}")
        if any(a < 0 for a in self.A) or any(g < 0 for g in self.G):
            raise DomainError("ARCH/GARCH coefficients must be non-negative")
        if self.persistence >= 1:
            raise DomainError(f"ΣA + ΣG = {self.persistence} must be < 1")
        if spec is not None and (
            len(self.A) != spec.p or len(self.G) != spec.q
            or len(self.ar) != spec.R or len(self.ma) != spec.M
        ):
            raise DomainError(f"parameter orders do not match {spec}")


@dataclass
class GarchFit:
    spec: GarchSpec
    params: GarchParams
    h_path: np.ndarray
    residuals: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    scale: float = 1.0
    h0: float = field(default=float("nan"))


def unconditional_variance(params: GarchParams) -> float:
    if params.persistence >= 1:
        raise NonStationaryError(f"ΣA + ΣG = {params.persistence} ≥ 1: no unconditional variance")
    return params.k / (1.0 - params.persistence)


def presample_variance(returns: np.ndarray, params: GarchParams) -> float:
    """Sample variance of the window; the unconditional variance if that is zero."""
    v = float(np.var(returns)) if len(returns) else 0.0
    return v if v > 0 else unconditional_variance(params)


def _arma_residuals(r: np.ndarray, c1: float, ar, ma) -> np.ndarray:
    u = r - c1
    if len(ar):
        R = len(ar)
        r_pre = np.concatenate([np.full(R, r.mean()), r])
        for i, phi in enumerate(ar, start=1):
            u = u - phi * r_pre[R - i : R - i + r.size]
    if len(ma):
        # ε_t + Σ θ_j ε_{t-j} = u_t
        return lfilter([1.0], np.concatenate([[1.0], ma]), u)
    return u


def _variance_recursion(eps: np.ndarray, k: float, A, G, h0: float) -> np.ndarray:
    e2 = eps * eps
    drive = np.full(e2.size, k)
    for i, a in enumerate(A, start=1):
        if i < e2.size:
            drive[i:] += a * e2[:-i]
    if not len(G):
        return drive
    G = np.asarray(G, dtype=np.float64)
    den = np.concatenate([[1.0], -G])
    # transposed direct-form state for presample outputs all equal to h0
    zi = h0 * np.cumsum(G[::-1])[::-1]
    h, _ = lfilter([1.0], den, drive, zi=zi)
    return h


def mean_residuals(returns: np.ndarray, params: GarchParams) -> np.ndarray:
    """ε_t from the ARMA mean, with presample returns at their sample mean and presample ε = 0."""
    return _arma_residuals(np.asarray(returns, dtype=np.float64), params.c1, params.ar, params.ma)


def variance_path(eps: np.ndarray, params: GarchParams, h0: float) -> np.ndarray:
    """h_t for t = 1..n with presample h = h0 and presample ε² = 0."""
    return _variance_recursion(np.asarray(eps, dtype=np.float64), params.k, params.A, params.G, h0)


def _gaussian_nll(eps: np.ndarray, h: np.ndarray) -> float:
    return 0.5 * float(np.sum(LOG_2PI + np.log(h) + eps * eps / h))


def negative_log_likelihood(
    params: GarchParams, returns, spec: GarchSpec = GarchSpec(), h0: float | None = None
) -> float:
    r = np.asarray(returns, dtype=np.float64)
    if r.size < 1:
        raise InsufficientDataError("negative log-likelihood needs at least one return")
    params.check(spec)
    eps = mean_residuals(r, params)
    h = variance_path(eps, params, presample_variance(r, params) if h0 is None else h0)
    return _gaussian_nll(eps, h)


# -- reparameterization -------------------------------------------------------

def _split(theta: np.ndarray, spec: GarchSpec):
    i = 1 + spec.R + spec.M
    k = math.exp(min(theta[i], 700.0))
    logits = np.append(theta[i + 1 : i + 1 + spec.p + spec.q], 0.0)
    w = np.exp(logits - logits.max())
    w /= w.sum()
    return (
        theta[0],
        theta[1 : 1 + spec.R],
        theta[1 + spec.R : i],
        k,
        w[: spec.p],
        w[spec.p : spec.p + spec.q],
    )


def _to_natural(theta: np.ndarray, spec: GarchSpec) -> GarchParams:
    c1, ar, ma, k, A, G = _split(theta, spec)
    return GarchParams(c1=c1, k=k, A=tuple(A), G=tuple(G), ar=tuple(ar), ma=tuple(ma))


def _to_unconstrained(params: GarchParams) -> np.ndarray:
    slack = 1.0 - params.persistence
    logits = [math.log(v / slack) for v in (*params.A, *params.G)]
    return np.array([params.c1, *params.ar, *params.ma, math.log(params.k), *logits])


def _start(spec: GarchSpec, a_share: float, g_share: float, mean: float) -> GarchParams:
    if spec.q == 0:
        a_share, g_share = a_share + g_share * 0.5, 0.0
    A = tuple([a_share / spec.p] * spec.p)
    G = tuple([g_share / spec.q] * spec.q) if spec.q else ()
    # standardized data: unconditional variance 1
    k = 1.0 - a_share - g_share
    return GarchParams(c1=mean, k=k, A=A, G=G, ar=(0.0,) * spec.R, ma=(0.0,) * spec.M)


@numba.njit(cache=True)
def _nll_kernel(x, c1, ar, ma, k, A, G, h0):
    """Loop form of the mean and variance recursions; returns the Gaussian NLL."""
    n = x.size
    R, M, p, q = ar.size, ma.size, A.size, G.size
    eps = np.zeros(n)
    h = np.zeros(n)
    xbar = x.mean()
    total = 0.0
    for t in range(n):
        u = x[t] - c1
        for i in range(1, R + 1):
            u -= ar[i - 1] * (x[t - i] if t - i >= 0 else xbar)
        for j in range(1, M + 1):
            if t - j >= 0:
                u -= ma[j - 1] * eps[t - j]
        eps[t] = u
        ht = k
        for i in range(1, p + 1):
            if t - i >= 0:
                ht += A[i - 1] * eps[t - i] * eps[t - i]
        for i in range(1, q + 1):
            ht += G[i - 1] * (h[t - i] if t - i >= 0 else h0)
        if not ht > 0.0:
            return 1e300
        h[t] = ht
        total += LOG_2PI + math.log(ht) + u * u / ht
    return 0.5 * total


@numba.njit(cache=True)
def _theta_nll(theta, x, R, M, p, q, h0):
    i = 1 + R + M
    k = math.exp(min(theta[i], 700.0))
    top = 0.0
    for j in range(p + q):
        top = max(top, theta[i + 1 + j])
    w = np.empty(p + q)
    denom = math.exp(-top)
    for j in range(p + q):
        w[j] = math.exp(theta[i + 1 + j] - top)
        denom += w[j]
    w /= denom
    if w.sum() >= 1.0 or not k > 0.0:
        return 1e300
    return _nll_kernel(x, theta[0], theta[1 : 1 + R], theta[1 + R : i], k, w[:p], w[p:], h0)


def _objective(theta: np.ndarray, x: np.ndarray, spec: GarchSpec, h0: float) -> float:
    val = _theta_nll(theta, x, spec.R, spec.M, spec.p, spec.q, h0)
    return val if math.isfinite(val) else 1e300


def _initial_simplex(theta0: np.ndarray, step: float = 0.25) -> np.ndarray:
    sim = np.tile(theta0, (theta0.size + 1, 1))
    for j in range(theta0.size):
        sim[j + 1, j] += step
    return sim


def fit_garch(returns, spec: GarchSpec = GarchSpec()) -> GarchFit:
    """Maximum-likelihood fit.

    Returns are standardized by their sample standard deviation before the
    search and the fitted mean constant and variance constant are mapped
    back, so the optimizer sees the same problem at any price scale.
    Three fixed starting points are tried and the lowest NLL kept.
    ``converged`` reports whether that search met the simplex tolerance
    within the iteration cap.
    """
    r = np.asarray(returns, dtype=np.float64).ravel()
    if r.size < MIN_FIT_LENGTH:
        raise InsufficientDataError(f"GARCH fit needs at least {MIN_FIT_LENGTH} returns, got {r.size}")
    if not np.all(np.isfinite(r)):
        raise DomainError("returns contain non-finite values")
    scale = float(np.std(r))
    if not scale > 0:
        raise DegenerateSeriesError("GARCH fit undefined for a zero-variance series")
    x = r / scale
    h0 = float(np.var(x))

    best = None
    iterations = 0
    for a_share, g_share in START_POINTS:
        theta0 = _to_unconstrained(_start(spec, a_share, g_share, float(x.mean())))
        res = minimize(
            _objective,
            theta0,
            args=(x, spec, h0),
            method="Nelder-Mead",
            options={
                "xatol": SIMPLEX_XATOL,
                "fatol": np.inf,
                "maxiter": SIMPLEX_MAXITER,
                "initial_simplex": _initial_simplex(theta0),
            },
        )
        iterations += int(res.nit)
        if best is None or res.fun < best.fun:
            best = res

    std_params = _to_natural(best.x, spec)
    params = GarchParams(
        c1=std_params.c1 * scale,
        k=std_params.k * scale * scale,
        A=std_params.A,
        G=std_params.G,
        ar=std_params.ar,
        ma=std_params.ma,
    )
    h0_raw = h0 * scale * scale
    eps = mean_residuals(r, params)
    h = variance_path(eps, params, h0_raw)
    loglik = -_gaussian_nll(eps, h)
    if not best.success:
        logger.debug("GARCH simplex stopped without meeting tolerance: %s", best.message)
    return GarchFit(
        spec=spec,
        params=params,
        h_path=h,
        residuals=eps,
        loglik=loglik,
        converged=bool(best.success),
        iterations=iterations,
        scale=scale,
        h0=h0_raw,
    )


def forecast_one_step(fit: GarchFit, returns) -> tuple[float, float]:
    """Next-period conditional mean and variance given ``returns``.

    ``returns`` must be the series the fit came from or an extension of it;
    residuals and variances are recomputed over it with the fitted
    parameters.
    """
    r = np.asarray(returns, dtype=np.float64).ravel()
    if r.size < fit.residuals.size:
        raise InsufficientDataError(
            f"forecast needs the {fit.residuals.size} fitted returns or more, got {r.size}"
        )
    p = fit.params
    h0 = fit.h0 if math.isfinite(fit.h0) else presample_variance(r[: fit.residuals.size], p)
    eps = mean_residuals(r, p)
    h = variance_path(eps, p, h0)
    n = r.size
    mean = p.c1
    for i, phi in enumerate(p.ar, start=1):
        mean += phi * (r[n - i] if n - i >= 0 else r.mean())
    for j, theta in enumerate(p.ma, start=1):
        mean += theta * (eps[n - j] if n - j >= 0 else 0.0)
    var = p.k
    for i, a in enumerate(p.A, start=1):
        var += a * (eps[n - i] ** 2 if n - i >= 0 else 0.0)
    for i, g in enumerate(p.G, start=1):
        var += g * (h[n - i] if n - i >= 0 else h0)
    return float(mean), float(var)


def simulate_garch(
    n: int, params: GarchParams, rng: np.random.Generator, burn: int = 500
) -> np.ndarray:
    """Draw ``n`` returns from the model recursion (presample at the unconditional variance)."""
    p, q = len(params.A), len(params.G)
    R, M = len(params.ar), len(params.ma)
    total = n + burn
    hbar = unconditional_variance(params)
    lag = max(p, q, R, M, 1)
    h = np.full(total + lag, hbar)
    eps = np.zeros(total + lag)
    r = np.full(total + lag, params.c1 / (1.0 - sum(params.ar)) if params.ar else params.c1)
    u = rng.standard_normal(total)
    for t in range(lag, total + lag):
        ht = params.k
        for i in range(1, p + 1):
            ht += params.A[i - 1] * eps[t - i] ** 2
        for i in range(1, q + 1):
            ht += params.G[i - 1] * h[t - i]
        h[t] = ht
        eps[t] = u[t - lag] * math.sqrt(ht)
        rt = params.c1 + eps[t]
        for i in range(1, R + 1):
            rt += params.ar[i - 1] * r[t - i]
        for j in range(1, M + 1):
            rt += params.ma[j - 1] * eps[t - j]
        r[t] = rt
    return r[lag + burn :]


def _window_forecast(args) -> tuple[float, bool]:
    """Forecast log-return for the day after a price window: (r̂, converged)."""
    window, spec = args
    returns = np.diff(np.log(window))
    try:
        fit = fit_garch(returns, spec)
    except DegenerateSeriesError:
        return 0.0, False
    mean, _ = forecast_one_step(fit, returns)
    return mean, fit.converged


def garch_price_forecasts(
    prices, window: int = 200, spec: GarchSpec = GarchSpec(), workers: int = 1, include_next: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Rolling one-step price forecasts and their convergence flags.

    Element j is the forecast for day ``window + j`` made from
    ``prices[j : j + window]``. With ``include_next`` one extra element
    forecasts the day after the final price.
    """
    prices = np.asarray(prices, dtype=np.float64).ravel()
    if window - 1 < MIN_FIT_LENGTH:
        raise ValueError(f"window must be at least {MIN_FIT_LENGTH + 1} prices")
    if prices.size <= window:
        raise InsufficientDataError(f"need more than {window} prices, got {prices.size}")
    bad = np.flatnonzero(~(prices > 0))
    if bad.size:
        raise DomainError(f"prices must be positive; index {bad[0]} is {prices[bad[0]]!r}")
    count = prices.size - window + (1 if include_next else 0)
    tasks = [(prices[j : j + window], spec) for j in range(count)]
    out = parallel_map(_window_forecast, tasks, workers)
    r_hat = np.array([o[0] for o in out])
    converged = np.array([o[1] for o in out], dtype=bool)
    last = prices[window - 1 : window - 1 + count]
    return last * np.exp(r_hat), converged


def rolling_garch_price_forecast(
    prices, window: int = 200, spec: GarchSpec = GarchSpec(), workers: int = 1
) -> np.ndarray:
    """GSHEA: rolling GARCH price forecasts, length ``len(prices) - window``.

    Output index t holds the forecast for day ``window + t`` computed from
    the ``window`` prices before it only.
    """
    forecasts, converged = garch_price_forecasts(prices, window, spec, workers)
    if not converged.all():
        logger.info("%d of %d rolling GARCH fits did not converge", int((~converged).sum()), converged.size)
    return forecasts
