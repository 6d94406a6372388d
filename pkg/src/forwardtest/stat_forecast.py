"""Augmented Dickey-Fuller testing and ARIMA(p, d, q) selection, fitting and forecasting."""

import datetime as dt
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.stats import norm

from .errors import (
    AggregateError,
    ArgumentError,
    ConvergenceError,
    DegenerateError,
    NumericalError,
    SizeError,
)
from .forecast import ForecastSeries, future_trading_days
from .utils import validate_vector

logger = logging.getLogger(__name__)

# MacKinnon response-surface coefficients for the constant-only regression
_ADF_TAU_MAX = 2.74
_ADF_TAU_MIN = -18.83
_ADF_TAU_STAR = -1.61
_ADF_SMALL_P = (2.1659, 1.4412, 0.038269)
_ADF_LARGE_P = (1.7339, 0.93202, -0.12745, -0.010368)
# finite-sample critical values: c0 + c1/T + c2/T^2 + c3/T^3
ADF_CRITICAL_COEFFICIENTS = {
    "1%": (-3.43035, -6.5393, -16.786, -79.433),
    "5%": (-2.86154, -2.8903, -4.234, -40.04),
    "10%": (-2.56677, -1.5384, -2.809, 0.0),
}

TRANSFORMS = ("level", "log")


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    pvalue: float
    used_lag: int
    nobs: int
    critical_values: Dict[str, float]
    aic: float

    @property
    def stationary(self) -> bool:
        """Unit root rejected at the 5% level."""
        return self.statistic < self.critical_values["5%"]

    def to_dict(self) -> Dict[str, object]:
        return {
            "statistic": self.statistic,
            "pvalue": self.pvalue,
            "used_lag": self.used_lag,
            "nobs": self.nobs,
            "critical_values": dict(self.critical_values),
            "aic": self.aic,
            "stationary": self.stationary,
        }


@dataclass(frozen=True)
class ArimaModel:
    order: Tuple[int, int, int]
    ar: Tuple[float, ...]
    ma: Tuple[float, ...]
    intercept: float
    sigma2: float
    aic: float
    nobs: int
    sse: float
    transform: str = "level"
    converged: bool = True
    evaluations: int = 0
    aic_table: Dict[Tuple[int, int], Optional[float]] = field(default_factory=dict, repr=False)

    @property
    def stationary(self) -> bool:
        if not self.ar:
            return True
        roots = np.roots(np.r_[1.0, -np.asarray(self.ar)])
        return bool(np.all(np.abs(roots) < 1.0))

    @property
    def invertible(self) -> bool:
        if not self.ma:
            return True
        roots = np.roots(np.r_[1.0, np.asarray(self.ma)])
        return bool(np.all(np.abs(roots) < 1.0))

    def to_dict(self) -> Dict[str, object]:
        return {
            "order": list(self.order),
            "ar": list(self.ar),
            "ma": list(self.ma),
            "intercept": self.intercept,
            "sigma2": self.sigma2,
            "aic": self.aic,
            "nobs": self.nobs,
            "sse": self.sse,
            "transform": self.transform,
            "converged": self.converged,
            "stationary": self.stationary,
            "invertible": self.invertible,
        }


def default_adf_max_lag(n: int) -> int:
    return max(0, min(int(math.ceil(12.0 * (n / 100.0) ** 0.25)), n // 2 - 2))


def adf_critical_values(nobs: int) -> Dict[str, float]:
    return {
        level: float(sum(c / nobs ** i for i, c in enumerate(coefficients)))
        for level, coefficients in ADF_CRITICAL_COEFFICIENTS.items()
    }


def adf_pvalue(statistic: float) -> float:
    if statistic > _ADF_TAU_MAX:
        return 1.0
    if statistic < _ADF_TAU_MIN:
        return 0.0
    coefficients = _ADF_SMALL_P if statistic <= _ADF_TAU_STAR else _ADF_LARGE_P
    return float(norm.cdf(np.polyval(coefficients[::-1], statistic)))


def _adf_design(y: np.ndarray, lag: int, first_row: int) -> Tuple[np.ndarray, np.ndarray]:
    """Rows regress dy[k] on (1, y[k], dy[k-1] .. dy[k-lag]) for k >= first_row."""
    dy = np.diff(y)
    rows = np.arange(first_row, len(dy))
    columns = [np.ones(len(rows)), y[rows]]
    columns.extend(dy[rows - i] for i in range(1, lag + 1))
    return np.column_stack(columns), dy[rows]


def _ols(X: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, float, np.ndarray]:
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise NumericalError(f"singular ADF regression ({X.shape[0]} x {X.shape[1]})")
    try:
        xtx_inv = np.linalg.inv(X.T @ X)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular ADF regression: {exc}") from exc
    beta = xtx_inv @ X.T @ target
    resid = target - X @ beta
    return beta, float(resid @ resid), xtx_inv


def adf_test(series, max_lag: Optional[int] = None, criterion: str = "AIC") -> AdfResult:
    """ADF unit-root test with a constant, lag order picked by AIC.

    Every lag 0..max_lag is fitted on the sample the largest lag allows; the
    chosen lag is then refitted on all the observations it can use.
    """
    if criterion.upper() != "AIC":
        raise ArgumentError(f"unsupported lag criterion {criterion!r}")
    y = validate_vector(series, min_length=3, name="series")
    n = len(y)
    if max_lag is None:
        max_lag = default_adf_max_lag(n)
    if max_lag < 0:
        raise ArgumentError(f"max_lag must be >= 0, got {max_lag}")
    if n <= max_lag + 10:
        raise SizeError(f"ADF with max_lag {max_lag} needs more than {max_lag + 10} points, got {n}")

    best_lag, best_aic = 0, math.inf
    for lag in range(max_lag + 1):
        X, target = _adf_design(y, lag, max_lag)
        _, ssr, _ = _ols(X, target)
        nobs = len(target)
        aic = nobs * math.log(ssr / nobs) + 2 * X.shape[1]
        logger.debug(f"ADF lag {lag}: aic {aic:.4f}")
        if aic < best_aic:
            best_lag, best_aic = lag, aic

    X, target = _adf_design(y, best_lag, best_lag)
    beta, ssr, xtx_inv = _ols(X, target)
    nobs = len(target)
    dof = nobs - X.shape[1]
    if dof <= 0:
        raise SizeError("no residual degrees of freedom left in the ADF regression")
    se = math.sqrt(ssr / dof * xtx_inv[1, 1])
    statistic = float(beta[1] / se)
    result = AdfResult(
        statistic=statistic,
        pvalue=adf_pvalue(statistic),
        used_lag=best_lag,
        nobs=nobs,
        critical_values=adf_critical_values(nobs),
        aic=nobs * math.log(ssr / nobs) + 2 * X.shape[1],
    )
    logger.info(f"ADF statistic {statistic:.4f} (lag {best_lag}, nobs {nobs}, p {result.pvalue:.4f})")
    return result


def difference(series, d: int = 1) -> np.ndarray:
    y = validate_vector(series, min_length=1, name="series")
    if d < 0:
        raise ArgumentError(f"d must be >= 0, got {d}")
    if len(y) <= d:
        raise SizeError(f"differencing {d} times needs more than {d} points, got {len(y)}")
    return np.diff(y, n=d)


def _transform(values: np.ndarray, transform: str) -> np.ndarray:
    if transform not in TRANSFORMS:
        raise ArgumentError(f"unknown transform {transform!r}; expected one of {TRANSFORMS}")
    if transform == "log":
        if np.any(values <= 0):
            raise ArgumentError("log transform needs strictly positive prices")
        return np.log(values)
    return values


def css_residuals(w: np.ndarray, intercept: float, ar: Sequence[float], ma: Sequence[float], start: int) -> np.ndarray:
    """One-step residuals from index `start` on, with pre-sample residuals set to zero."""
    p = len(ar)
    u = w[start:] - intercept
    for i in range(1, p + 1):
        u = u - ar[i - 1] * w[start - i:len(w) - i]
    if len(ma):
        return lfilter([1.0], np.r_[1.0, np.asarray(ma, dtype=float)], u)
    return u


def _split(params: np.ndarray, p: int, q: int) -> Tuple[float, np.ndarray, np.ndarray]:
    return float(params[0]), params[1:1 + p], params[1 + p:1 + p + q]


def fit_arma_css(
    diffed,
    p: int,
    q: int,
    start: Optional[int] = None,
    max_evaluations: int = 20000,
    d: int = 1,
    transform: str = "level",
) -> ArimaModel:
    """ARMA(p, q) with intercept on an already differenced series, by conditional sum of squares.

    Coefficients start at zero (intercept at the sample mean) and are moved
    by a Nelder-Mead simplex search. `start` is the conditioning offset and
    defaults to p; auto_arima pins it so AICs share a sample.
    """
    w = validate_vector(diffed, min_length=2, name="differenced series")
    if p < 0 or q < 0:
        raise ArgumentError(f"orders must be non-negative, got p={p}, q={q}")
    if len(w) < 10 * (p + q + 1):
        raise SizeError(f"ARMA({p},{q}) needs {10 * (p + q + 1)} points, got {len(w)}")
    start = p if start is None else start
    if start < p:
        raise ArgumentError(f"conditioning start {start} must be >= p = {p}")
    scale = float(np.var(w[start:]))
    if not scale > 0:
        raise DegenerateError("differenced series is constant")

    def sse_of(params: np.ndarray) -> float:
        c, ar, ma = _split(params, p, q)
        e = css_residuals(w, c, ar, ma, start)
        value = float(e @ e)
        return value if math.isfinite(value) else math.inf

    n_params = 1 + p + q
    x0 = np.zeros(n_params)
    x0[0] = float(np.mean(w[start:]))
    simplex = np.tile(x0, (n_params + 1, 1))
    simplex[1, 0] += 0.1 * math.sqrt(scale)
    for i in range(1, n_params):
        simplex[i + 1, i] += 0.1

    nobs = len(w) - start
    normalizer = nobs * scale
    outcome = minimize(
        lambda params: sse_of(params) / normalizer,
        x0,
        method="Nelder-Mead",
        options={
            "maxfev": max_evaluations,
            "maxiter": max_evaluations,
            "xatol": 1e-7,
            "fatol": 1e-11,
            "initial_simplex": simplex,
            "adaptive": n_params > 2,
        },
    )
    params = outcome.x if sse_of(outcome.x) <= sse_of(x0) else x0
    sse = sse_of(params)
    c, ar, ma = _split(params, p, q)
    model = ArimaModel(
        order=(p, d, q),
        ar=tuple(float(v) for v in ar),
        ma=tuple(float(v) for v in ma),
        intercept=c,
        sigma2=sse / nobs,
        aic=nobs * math.log(sse / nobs) + 2 * n_params,
        nobs=nobs,
        sse=sse,
        transform=transform,
        converged=bool(outcome.success),
        evaluations=int(outcome.nfev),
    )
    logger.debug(f"ARIMA{model.order}: aic {model.aic:.3f} after {model.evaluations} evaluations")
    if not outcome.success:
        raise ConvergenceError(f"ARIMA{model.order} did not converge: {outcome.message}", best=model)
    if not (model.stationary and model.invertible):
        logger.warning(f"ARIMA{model.order} fit is not stationary/invertible: ar={model.ar}, ma={model.ma}")
    return model


def auto_arima(
    series,
    p_range: Sequence[int] = range(0, 6),
    q_range: Sequence[int] = range(0, 3),
    d: int = 1,
    transform: str = "level",
    max_evaluations: int = 20000,
) -> ArimaModel:
    """Exhaustive grid over (p, q); the minimum-AIC converged fit wins.

    Cells that fail to converge stay in `aic_table` with their best-so-far
    AIC but are not eligible for selection.
    """
    y = _transform(validate_vector(series, min_length=2, name="series"), transform)
    p_values, q_values = sorted(p_range), sorted(q_range)
    if not p_values or not q_values:
        raise ArgumentError("empty order grid")
    w = difference(y, d)
    start = max(p_values)

    table: Dict[Tuple[int, int], Optional[float]] = {}
    failures: List[Exception] = []
    best: Optional[ArimaModel] = None
    for p in p_values:
        for q in q_values:
            try:
                model = fit_arma_css(w, p, q, start, max_evaluations, d, transform)
            except ConvergenceError as exc:
                logger.warning(str(exc))
                table[(p, q)] = exc.best.aic if exc.best is not None else None
                failures.append(exc)
                continue
            except (SizeError, DegenerateError, NumericalError) as exc:
                logger.warning(f"ARIMA({p},{d},{q}) skipped: {exc}")
                table[(p, q)] = None
                failures.append(exc)
                continue
            table[(p, q)] = model.aic
            if best is None or model.aic < best.aic:
                best = model

    if best is None:
        raise AggregateError("every ARIMA grid cell failed", failures)
    logger.info(f"Selected ARIMA{best.order} with AIC {best.aic:.3f}")
    return replace(best, aic_table=table)


def arima_predict(model: ArimaModel, observations, horizon: int = 30) -> np.ndarray:
    """Point forecasts on the price scale for the `horizon` steps after `observations`."""
    if horizon < 1:
        raise ArgumentError(f"horizon must be >= 1, got {horizon}")
    p, d, q = model.order
    y = _transform(validate_vector(observations, min_length=d + p + 1, name="observations"), model.transform)
    w = np.diff(y, n=d)
    residuals = css_residuals(w, model.intercept, model.ar, model.ma, p)

    history = list(w)
    errors = list(residuals)
    predicted = []
    for _ in range(horizon):
        value = model.intercept
        value += sum(model.ar[i] * history[-1 - i] for i in range(p))
        value += sum(model.ma[j] * errors[-1 - j] for j in range(q) if j < len(errors))
        history.append(value)
        errors.append(0.0)
        predicted.append(value)

    path = np.asarray(predicted)
    # integrate back through each differencing level
    for level in range(d - 1, -1, -1):
        path = np.diff(y, n=level)[-1] + np.cumsum(path)
    return np.exp(path) if model.transform == "log" else path


def arima_forecast(model: ArimaModel, observations, horizon: int = 30, last_date: Optional[dt.date] = None) -> ForecastSeries:
    """Close-price forecast; `observations` may be a PriceSeries or a vector plus `last_date`."""
    if hasattr(observations, "closes"):
        last_date = last_date or observations.dates[-1]
        observations = observations.closes
    if last_date is None:
        raise ArgumentError("last_date is required when forecasting from a bare vector")
    values = arima_predict(model, observations, horizon)
    p, d, q = model.order
    return ForecastSeries(
        model_id=f"arima({p},{d},{q})",
        dates=future_trading_days(last_date, horizon),
        values={"close": values},
        mode="recursive",
        metadata={"transform": model.transform},
    )


def acf_pacf(series, max_lag: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sample ACF (autocovariance / lag-0 autocovariance) and PACF by Durbin-Levinson."""
    y = validate_vector(series, min_length=1, name="series")
    if max_lag < 1:
        raise ArgumentError(f"max_lag must be >= 1, got {max_lag}")
    if len(y) <= max_lag + 1:
        raise SizeError(f"ACF to lag {max_lag} needs more than {max_lag + 1} points, got {len(y)}")
    dev = y - y.mean()
    gamma0 = float(dev @ dev) / len(y)
    if gamma0 == 0:
        raise DegenerateError("ACF is undefined for a constant series")
    acf = np.array([float(dev[k:] @ dev[:len(y) - k]) / len(y) / gamma0 for k in range(max_lag + 1)])

    pacf = np.zeros(max_lag + 1)
    pacf[0] = 1.0
    phi = np.zeros(0)
    for k in range(1, max_lag + 1):
        denominator = 1.0 - float(phi @ acf[1:k])
        if denominator == 0:
            raise NumericalError(f"Durbin-Levinson breaks down at lag {k}")
        phi_kk = (acf[k] - float(phi @ acf[k - 1:0:-1])) / denominator
        phi = np.r_[phi - phi_kk * phi[::-1], phi_kk]
        pacf[k] = phi_kk
    return acf, pacf
