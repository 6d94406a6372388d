"""Returns arithmetic and historical volatility estimators."""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, DegenerateError, DomainError, SizeError
from .ingest import PriceSeries
from .utils import validate_vector

logger = logging.getLogger(__name__)

TRADING_DAYS = 252


class VolatilityKind(str, Enum):
    STDDEV = "STDDEV"
    PK = "PK"
    GK = "GK"
    RS = "RS"
    YZ = "YZ"


@dataclass(frozen=True)
class TradeLeg:
    """One round trip; the fee is charged on the sell notional (sell * k)."""
    buy_price: float
    sell_price: float
    fee_rate: float = 0.0

    def __post_init__(self):
        if not self.buy_price > 0:
            raise DomainError(f"buy price must be positive, got {self.buy_price}")
        if self.fee_rate < 0:
            raise DomainError(f"fee rate must be non-negative, got {self.fee_rate}")

    @property
    def fee(self) -> float:
        return self.sell_price * self.fee_rate

    @property
    def factor(self) -> float:
        return 1.0 + (self.sell_price - self.buy_price - self.fee) / self.buy_price


@dataclass(frozen=True)
class VolatilitySummary:
    kind: str
    window: int
    min: float
    max: float
    mean: float
    std: float

    @classmethod
    def of(cls, kind: str, window: int, values: np.ndarray) -> "VolatilitySummary":
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        return cls(kind, window, float(np.min(values)), float(np.max(values)), float(np.mean(values)), std)

    def to_dict(self) -> Dict[str, object]:
        return {
            "kind": self.kind,
            "window": self.window,
            "min": self.min,
            "max": self.max,
            "mean": self.mean,
            "std": self.std,
        }


def log_returns(closes) -> np.ndarray:
    """ln(c[i+1] / c[i]) for consecutive closes."""
    arr = validate_vector(closes, min_length=2, name="closes")
    if np.any(arr <= 0):
        raise DomainError("log returns need strictly positive prices")
    return np.diff(np.log(arr))


def cumulative_return(trades: Sequence[TradeLeg]) -> Tuple[float, float]:
    """Compounded return CR and its log form lnCR over a list of trades."""
    if not trades:
        raise ArgumentError("cumulative return needs at least one trade")
    factors = np.array([trade.factor for trade in trades], dtype=float)
    cr = float(np.prod(factors))
    if np.any(factors <= 0):
        raise DomainError(f"a trade lost 100% or more (CR = {cr}); lnCR is undefined")
    return cr, float(np.sum(np.log(factors)))


def total_and_standardized_returns(closes, delta: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """R_t = (Z[t+delta] - Z[t]) / Z[t] and its z-scored form."""
    if delta < 1:
        raise ArgumentError(f"delta must be >= 1, got {delta}")
    arr = validate_vector(closes, min_length=1, name="closes")
    if len(arr) <= delta:
        raise SizeError(f"need more than {delta} prices, got {len(arr)}")
    if np.any(arr[:-delta] == 0):
        raise DomainError("total returns are undefined at a zero price")
    total = (arr[delta:] - arr[:-delta]) / arr[:-delta]
    spread = np.std(total)
    if not spread > 0:
        raise DegenerateError("standardized returns are undefined for constant total returns")
    return total, (total - np.mean(total)) / spread


def percentage_returns(closes) -> Tuple[np.ndarray, VolatilitySummary]:
    """One-day total returns and their min/max/mean/std row."""
    total = total_and_standardized_returns(closes, 1)[0]
    return total, VolatilitySummary.of("PR", 1, total)


def yang_zhang_weight(window: int) -> float:
    return 0.34 / (1.34 + (window + 1) / (window - 1))


def _rolling_mean(values: np.ndarray, window: int) -> np.ndarray:
    return sliding_window_view(values, window).mean(axis=1)


def _rolling_var(values: np.ndarray, window: int) -> np.ndarray:
    return sliding_window_view(values, window).var(axis=1, ddof=1)


def _log_terms(series: PriceSeries) -> Dict[str, np.ndarray]:
    o, h, l, c = series.opens, series.highs, series.lows, series.closes
    if np.any(np.concatenate([o, h, l, c]) <= 0):
        raise DomainError(f"{series.ticker}: volatility needs strictly positive prices")
    return {
        "hl": np.log(h / l),
        "co": np.log(c / o),
        "u": np.log(h / o),
        "d": np.log(l / o),
        "overnight": np.log(o[1:] / c[:-1]),
        "close": np.log(c),
    }


def _rs_terms(terms: Dict[str, np.ndarray]) -> np.ndarray:
    u, d, c = terms["u"], terms["d"], terms["co"]
    return u * (u - c) + d * (d - c)


def volatility(
    series: PriceSeries,
    kind,
    window: int = 30,
    periods_per_year: int = TRADING_DAYS,
) -> Tuple[pd.Series, VolatilitySummary]:
    """Rolling annualized volatility indexed by the last date of each window.

    PK, GK and RS use the bars of the window alone (n - N + 1 values).
    YZ and STDDEV need the close preceding the window (n - N values).
    """
    kind = VolatilityKind(kind)
    if window < 2:
        raise ArgumentError(f"window must be >= 2, got {window}")
    needs_previous = kind in (VolatilityKind.YZ, VolatilityKind.STDDEV)
    required = window + 1 if needs_previous else window
    if len(series) < required:
        raise SizeError(f"{kind.value} with window {window} needs {required} bars, got {len(series)}")

    terms = _log_terms(series)
    if kind is VolatilityKind.PK:
        variance = _rolling_mean(terms["hl"] ** 2, window) / (4.0 * math.log(2.0))
    elif kind is VolatilityKind.GK:
        daily = 0.5 * terms["hl"] ** 2 - (2.0 * math.log(2.0) - 1.0) * terms["co"] ** 2
        variance = _rolling_mean(daily, window)
    elif kind is VolatilityKind.RS:
        variance = _rolling_mean(_rs_terms(terms), window)
    elif kind is VolatilityKind.YZ:
        k = yang_zhang_weight(window)
        overnight = _rolling_var(terms["overnight"], window)
        open_close = _rolling_var(terms["co"][1:], window)
        rs = _rolling_mean(_rs_terms(terms)[1:], window)
        variance = overnight + k * open_close + (1.0 - k) * rs
    else:
        variance = _rolling_var(np.diff(terms["close"]), window)

    # GK window means can round below zero
    values = np.sqrt(np.maximum(variance, 0.0)) * math.sqrt(periods_per_year)
    dates = pd.to_datetime(series.dates[len(series) - len(values):])
    rolling = pd.Series(values, index=pd.DatetimeIndex(dates, name="date"), name=kind.value)

    summary = VolatilitySummary.of(kind.value, window, values)
    logger.debug(f"{series.ticker} {kind.value}(N={window}): mean {summary.mean:.6f}, std {summary.std:.6f}")
    return rolling, summary


def volatility_table(series: PriceSeries, window: int = 30, periods_per_year: int = TRADING_DAYS) -> pd.DataFrame:
    """Summary rows for all five estimators plus one-day percentage returns."""
    rows = [volatility(series, kind, window, periods_per_year)[1].to_dict() for kind in VolatilityKind]
    rows.append(percentage_returns(series.closes)[1].to_dict())
    return pd.DataFrame(rows, columns=["kind", "window", "min", "max", "mean", "std"])
