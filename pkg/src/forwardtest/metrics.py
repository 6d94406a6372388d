"""Forecast-error metrics and profit/risk metrics of a backtest."""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .backtest import BacktestReport
from .errors import DomainError, ShapeError, SizeError
from .utils import validate_vector

logger = logging.getLogger(__name__)

EXPECTANCY_DEFINITION = "R-multiple: (win_rate * avg_win - loss_rate * avg_loss) / avg_loss"


@dataclass(frozen=True)
class ForecastErrors:
    mse: float
    rmse: float
    mae: float
    mape: Optional[float]
    evs: float

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {"MSE": self.mse, "RMSE": self.rmse, "MAE": self.mae, "MAPE": self.mape, "EVS": self.evs}


@dataclass(frozen=True)
class RiskMetrics:
    """Ratios that cannot be computed are None and named in `flags`."""
    total_return: float
    expectancy: Optional[float]
    sharpe: Optional[float]
    sortino: Optional[float]
    calmar: Optional[float]
    mdd: float
    n_trades: int
    flags: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, object]:
        return {
            "TotalReturn": self.total_return,
            "Expectancy": self.expectancy,
            "Sharpe": self.sharpe,
            "Sortino": self.sortino,
            "Calmar": self.calmar,
            "MDD": self.mdd,
            "n_trades": self.n_trades,
            "flags": list(self.flags),
        }


def forecast_errors(actual, predicted, include_mape: bool = True) -> ForecastErrors:
    """MSE, RMSE, MAE, MAPE and explained variance (biased variances)."""
    y = validate_vector(actual, min_length=2, name="actual")
    y_hat = validate_vector(predicted, min_length=2, name="predicted")
    if y.shape != y_hat.shape:
        raise ShapeError(f"lengths differ: {len(y)} actual vs {len(y_hat)} predicted")
    residual = y - y_hat
    mse = float(np.mean(residual ** 2))
    mape = None
    if include_mape:
        if np.any(y == 0):
            raise DomainError("MAPE is undefined when an actual value is zero")
        mape = float(np.mean(np.abs(residual) / np.abs(y)))
    signal_var = float(np.var(y))
    residual_var = float(np.var(residual))
    if signal_var > 0:
        evs = 1.0 - residual_var / signal_var
    else:
        evs = 1.0 if residual_var == 0 else 0.0
    return ForecastErrors(mse, math.sqrt(mse), float(np.mean(np.abs(residual))), mape, evs)


def max_drawdown(equity) -> float:
    """Largest (peak - value) / peak over the curve, by a running-peak scan."""
    curve = validate_vector(equity, min_length=1, name="equity")
    peaks = np.maximum.accumulate(curve)
    if np.any(peaks <= 0):
        raise DomainError("drawdown needs a positive running peak")
    return float(np.max((peaks - curve) / peaks))


def expectancy(profits) -> Optional[float]:
    """R-multiple expectancy of trade profits; None without losing trades."""
    profits = np.asarray(profits, dtype=float)
    if profits.size == 0:
        return None
    wins = profits[profits > 0]
    losses = -profits[profits < 0]
    if losses.size == 0:
        return None
    avg_win = float(wins.mean()) if wins.size else 0.0
    avg_loss = float(losses.mean())
    win_rate = wins.size / profits.size
    loss_rate = losses.size / profits.size
    return (win_rate * avg_win - loss_rate * avg_loss) / avg_loss


def risk_metrics(report: BacktestReport, periods_per_year: int = 252) -> RiskMetrics:
    equity = np.asarray(report.equity, dtype=float)
    if len(equity) < 2:
        raise SizeError(f"risk metrics need at least 2 equity points, got {len(equity)}")
    if np.any(equity[:-1] <= 0):
        raise DomainError("equity reached zero; daily returns are undefined")
    returns = equity[1:] / equity[:-1] - 1.0
    mean = float(np.mean(returns))
    annualizer = math.sqrt(periods_per_year)
    flags = []

    std = float(np.std(returns, ddof=1)) if len(returns) > 1 else 0.0
    sharpe = mean / std * annualizer if std > 0 else None
    if sharpe is None:
        flags.append("sharpe_undefined_zero_volatility")

    downside = returns[returns < 0]
    sortino = None
    if downside.size:
        downside_dev = math.sqrt(float(np.mean(downside ** 2)))
        sortino = mean / downside_dev * annualizer
    else:
        flags.append("sortino_undefined_no_downside")

    mdd = max_drawdown(equity)
    calmar = mean * periods_per_year / mdd if mdd > 0 else None
    if calmar is None:
        flags.append("calmar_undefined_zero_drawdown")

    trade_expectancy = expectancy([trade.profit for trade in report.trades])
    if trade_expectancy is None:
        flags.append("expectancy_undefined_no_losing_trade")

    return RiskMetrics(
        total_return=report.total_return,
        expectancy=trade_expectancy,
        sharpe=sharpe,
        sortino=sortino,
        calmar=calmar,
        mdd=mdd,
        n_trades=report.n_trades,
        flags=tuple(flags),
    )
