"""Strategy selection by backtesting the known past or forwardtesting a forecast path."""

import datetime as dt
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .backtest import BacktestReport, run_backtest
from .errors import ArgumentError, LookAheadError, SizeError
from .forecast import ForecastSeries
from .indicators import IndicatorSpec, SignalSeries, generate_signals, warmup_bars
from .ingest import PriceSeries
from .metrics import RiskMetrics, risk_metrics

logger = logging.getLogger(__name__)


class SelectionMode(str, Enum):
    BACKTEST = "BACKTEST"
    FORWARDTEST = "FORWARDTEST"


@dataclass(frozen=True)
class CandidateResult:
    spec: IndicatorSpec
    report: BacktestReport

    @property
    def metrics(self) -> RiskMetrics:
        return self.report.metrics

    def ranking_key(self) -> Tuple[float, float, int]:
        sharpe = self.metrics.sharpe if self.metrics.sharpe is not None else float("-inf")
        return (-self.report.total_return, -sharpe, self.report.n_trades)

    def to_dict(self) -> Dict[str, object]:
        return {
            "spec": self.spec.to_dict(),
            "final_equity": self.report.final_equity,
            "metrics": self.metrics.to_dict(),
        }


@dataclass(frozen=True)
class SelectionResult:
    mode: SelectionMode
    window: Tuple[dt.date, dt.date]
    ranked: Tuple[CandidateResult, ...]
    tie_break_note: str = ""

    @property
    def chosen(self) -> CandidateResult:
        return self.ranked[0]

    def to_dict(self) -> Dict[str, object]:
        return {
            "mode": self.mode.value,
            "window": [self.window[0].isoformat(), self.window[1].isoformat()],
            "chosen": self.chosen.spec.name,
            "tie_break_note": self.tie_break_note,
            "ranking": [candidate.to_dict() for candidate in self.ranked],
        }


@dataclass(frozen=True)
class ModeComparison:
    backtest: SelectionResult
    forwardtest: SelectionResult
    backtest_on_future: CandidateResult
    forwardtest_on_future: CandidateResult
    runs: int

    def to_dict(self) -> Dict[str, object]:
        return {
            "runs": self.runs,
            "backtest": self.backtest.to_dict(),
            "forwardtest": self.forwardtest.to_dict(),
            "real_future": {
                "backtest_choice": self.backtest_on_future.to_dict(),
                "forwardtest_choice": self.forwardtest_on_future.to_dict(),
            },
        }

    def rows(self) -> List[Dict[str, object]]:
        """Side-by-side metric rows for the comparison CSV."""
        rows = []
        for label, result in (("backtest", self.backtest_on_future), ("forwardtest", self.forwardtest_on_future)):
            row = {"mode": label, "strategy": result.spec.name}
            row.update({k: v for k, v in result.metrics.to_dict().items() if k != "flags"})
            rows.append(row)
        return rows


def forwardtest_series(history: PriceSeries, forecast: ForecastSeries, selection_date: Optional[dt.date] = None) -> PriceSeries:
    """Real history up to the selection date followed by the forecast bars.

    Raises LookAheadError if a real bar or the forecast start is not on the
    correct side of the selection date.
    """
    selection_date = selection_date or history.dates[-1]
    late = [d for d in history.dates if d > selection_date]
    if late:
        raise LookAheadError(f"{len(late)} history bar(s) dated after the selection date {selection_date}, first {late[0]}")
    if forecast.start_date <= selection_date:
        raise LookAheadError(f"forecast starts {forecast.start_date}, not after the selection date {selection_date}")
    return history.concat(forecast.to_price_series(history.ticker))


def evaluate_candidate(
    spec: IndicatorSpec,
    series: PriceSeries,
    window: int,
    budget: float = 100.0,
    fee_rate: float = 0.0,
    periods_per_year: int = 252,
) -> CandidateResult:
    """Indicators on the whole series, trading on its last `window` bars."""
    signals = generate_signals(spec, series)
    tail = SignalSeries(signals.dates[-window:], signals.actions[-window:], signals.spec_name)
    report = run_backtest(series[-window:], tail, budget, fee_rate)
    return CandidateResult(spec, report.with_metrics(risk_metrics(report, periods_per_year)))


def select_strategy(
    candidates: Sequence[IndicatorSpec],
    evaluation_series: PriceSeries,
    mode=SelectionMode.BACKTEST,
    window: int = 30,
    budget: float = 100.0,
    fee_rate: float = 0.0,
    periods_per_year: int = 252,
    selection_date: Optional[dt.date] = None,
) -> SelectionResult:
    """Rank candidates by total return on the last `window` bars (Sharpe, then fewer trades, on ties)."""
    mode = SelectionMode(mode)
    if not candidates:
        raise ArgumentError("no candidate strategies")
    if window < 2:
        raise ArgumentError(f"window must be >= 2, got {window}")
    needed = window + max(warmup_bars(spec) for spec in candidates) + 1
    if len(evaluation_series) < needed:
        raise SizeError(f"selection over {window} bars needs {needed} bars with warm-up, got {len(evaluation_series)}")
    if mode is SelectionMode.FORWARDTEST and selection_date is not None:
        first_evaluated = evaluation_series.dates[-window]
        if evaluation_series.dates[-window - 1] > selection_date or first_evaluated <= selection_date:
            raise LookAheadError(f"forwardtest window starting {first_evaluated} does not follow the selection date {selection_date}")

    results = [evaluate_candidate(spec, evaluation_series, window, budget, fee_rate, periods_per_year) for spec in candidates]
    ranked = tuple(sorted(results, key=lambda result: result.ranking_key()))

    note = ""
    if len(ranked) > 1 and ranked[0].report.total_return == ranked[1].report.total_return:
        note = f"{ranked[0].spec.name} and {ranked[1].spec.name} tie on total return; ranked by Sharpe, then fewer trades"
    window_dates = (evaluation_series.dates[-window], evaluation_series.dates[-1])
    logger.info(f"{mode.value} selection over {window_dates[0]}..{window_dates[1]}: {ranked[0].spec.name} "
                f"(total return {ranked[0].report.total_return:.4f})")
    return SelectionResult(mode, window_dates, ranked, note)


def compare_modes(
    candidates: Sequence[IndicatorSpec],
    history: PriceSeries,
    forecast: ForecastSeries,
    real_future: PriceSeries,
    budget: float = 100.0,
    fee_rate: float = 0.0,
    periods_per_year: int = 252,
) -> ModeComparison:
    """Select in both modes, then trade both picks on the real future."""
    if not len(real_future):
        raise ArgumentError("real future is empty")
    if real_future.dates[0] <= history.dates[-1]:
        raise ArgumentError(f"real future starts {real_future.dates[0]}, inside the history")
    window = forecast.horizon
    selection_date = history.dates[-1]

    backtest = select_strategy(candidates, history, SelectionMode.BACKTEST, window, budget, fee_rate, periods_per_year)
    forward_input = forwardtest_series(history, forecast, selection_date)
    forwardtest = select_strategy(
        candidates, forward_input, SelectionMode.FORWARDTEST, window, budget, fee_rate, periods_per_year, selection_date
    )

    realized = history.concat(real_future)
    horizon = len(real_future)
    on_future = [
        evaluate_candidate(choice.chosen.spec, realized, horizon, budget, fee_rate, periods_per_year)
        for choice in (backtest, forwardtest)
    ]
    runs = len(backtest.ranked) + len(forwardtest.ranked) + len(on_future)
    logger.info(f"compare: backtest picked {backtest.chosen.spec.name} ({on_future[0].report.total_return:.4f} on the real future), "
                f"forwardtest picked {forwardtest.chosen.spec.name} ({on_future[1].report.total_return:.4f})")
    return ModeComparison(backtest, forwardtest, on_future[0], on_future[1], runs)
