"""Long-only, full-budget, compounded simulation of a signal stream."""

import datetime as dt
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import ArgumentError, ShapeError
from .indicators import Action, SignalSeries
from .ingest import PriceSeries
from .returns_vol import TradeLeg

logger = logging.getLogger(__name__)

FILL_RULE = "next-open"


@dataclass
class Position:
    entry_date: dt.date
    entry_price: float
    quantity: float
    entry_fee: float
    entry_bar: int


@dataclass(frozen=True)
class TradeRecord:
    entry_date: dt.date
    entry_price: float
    exit_date: dt.date
    exit_price: float
    quantity: float
    fee: float
    profit: float
    return_fraction: float
    exit_reason: str = "signal"

    def as_leg(self, fee_rate: float = 0.0) -> TradeLeg:
        return TradeLeg(self.entry_price, self.exit_price, fee_rate)


@dataclass(frozen=True)
class BacktestReport:
    trades: Tuple[TradeRecord, ...]
    equity: np.ndarray
    dates: Tuple[dt.date, ...]
    budget: float
    fee_rate: float
    strategy: str = ""
    fill_rule: str = FILL_RULE
    metrics: Optional[object] = field(default=None, compare=False)

    @property
    def final_equity(self) -> float:
        return float(self.equity[-1])

    @property
    def total_return(self) -> float:
        return self.final_equity - self.budget

    @property
    def n_trades(self) -> int:
        return len(self.trades)

    def with_metrics(self, metrics) -> "BacktestReport":
        return replace(self, metrics=metrics)

    def blotter_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "entry_date": t.entry_date.isoformat(),
                    "entry_px": t.entry_price,
                    "exit_date": t.exit_date.isoformat(),
                    "exit_px": t.exit_price,
                    "qty": t.quantity,
                    "fee": t.fee,
                    "pnl": t.profit,
                }
                for t in self.trades
            ],
            columns=["entry_date", "entry_px", "exit_date", "exit_px", "qty", "fee", "pnl"],
        )

    def equity_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"date": [d.isoformat() for d in self.dates], "equity": self.equity})


def _close(position: Position, date: dt.date, price: float, cash: float, fee_rate: float, reason: str) -> Tuple[float, TradeRecord]:
    proceeds = position.quantity * price
    exit_fee = proceeds * fee_rate
    fees = position.entry_fee + exit_fee
    profit = position.quantity * (price - position.entry_price) - fees
    notional = position.quantity * position.entry_price
    trade = TradeRecord(
        entry_date=position.entry_date,
        entry_price=position.entry_price,
        exit_date=date,
        exit_price=price,
        quantity=position.quantity,
        fee=fees,
        profit=profit,
        return_fraction=profit / notional if notional else 0.0,
        exit_reason=reason,
    )
    return cash + proceeds - exit_fee, trade


def run_backtest(
    series: PriceSeries,
    signals: SignalSeries,
    budget: float = 100.0,
    fee_rate: float = 0.0,
) -> BacktestReport:
    """Replay `signals` over `series`.

    A signal on bar t fills at the open of bar t+1 with the whole current
    equity; the fee (notional * fee_rate) is paid from cash on both legs.
    Equity is marked at every close and an open position is closed at the
    last close.
    """
    if len(signals) != len(series):
        raise ShapeError(f"{len(signals)} signals for {len(series)} bars")
    if budget <= 0:
        raise ArgumentError(f"budget must be positive, got {budget}")
    if fee_rate < 0:
        raise ArgumentError(f"fee rate must be non-negative, got {fee_rate}")

    opens, closes, dates = series.opens, series.closes, series.dates
    n = len(series)
    equity = np.empty(n)
    cash = float(budget)
    position: Optional[Position] = None
    trades: List[TradeRecord] = []
    pending = Action.HOLD

    for t in range(n):
        if pending is Action.ENTER and position is None:
            if cash > 0 and opens[t] > 0:
                fee = cash * fee_rate
                position = Position(dates[t], opens[t], cash / opens[t], fee, t)
                cash = -fee
        elif pending is Action.EXIT and position is not None:
            cash, trade = _close(position, dates[t], opens[t], cash, fee_rate, "signal")
            trades.append(trade)
            position = None

        equity[t] = cash + (position.quantity * closes[t] if position else 0.0)
        pending = signals[t] if t < n - 1 else Action.HOLD

    if position is not None:
        cash, trade = _close(position, dates[-1], closes[-1], cash, fee_rate, "end_of_data")
        trades.append(trade)
        equity[-1] = cash

    report = BacktestReport(tuple(trades), equity, tuple(dates), float(budget), float(fee_rate), signals.spec_name)
    logger.debug(f"{signals.spec_name or 'signals'}: {len(trades)} trades, final equity {report.final_equity:.4f}")
    return report
