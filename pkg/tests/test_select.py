import numpy as np
import pytest

from src.forwardtest.errors import ArgumentError, LookAheadError, SizeError
from src.forwardtest.forecast import ForecastSeries, future_trading_days
from src.forwardtest.indicators import DEFAULT_CANDIDATES, parse_spec
from src.forwardtest.select import (
    SelectionMode,
    compare_modes,
    evaluate_candidate,
    forwardtest_series,
    select_strategy,
)
from tests.helpers import make_series, random_walk

HORIZON = 30


def forecast_after(history, closes, model_id="test"):
    path = make_series(closes)
    dates = future_trading_days(history.dates[-1], len(closes))
    values = {name: path.component(name) for name in ("open", "high", "low", "close")}
    return ForecastSeries(model_id, dates, values)


@pytest.fixture
def history():
    return make_series(random_walk(200, seed=3), ticker="HIST")


@pytest.fixture
def forecast(history):
    return forecast_after(history, random_walk(HORIZON, seed=4, start=history.closes[-1]))


def real_future(history, seed):
    start = future_trading_days(history.dates[-1], 1)[0]
    return make_series(random_walk(HORIZON, seed=seed, start=history.closes[-1]), ticker="HIST", start=start)


def test_forwardtest_series_appends_forecast(history, forecast):
    joined = forwardtest_series(history, forecast)
    assert len(joined) == len(history) + HORIZON
    assert joined.dates[:len(history)] == history.dates
    assert joined.dates[len(history):] == list(forecast.dates)
    np.testing.assert_array_equal(joined.closes[-HORIZON:], forecast["close"])
    assert joined.ticker == "HIST"


def test_forwardtest_series_rejects_forecast_inside_history(history, forecast):
    early = ForecastSeries("early", history.dates[-HORIZON:], forecast.values)
    with pytest.raises(LookAheadError):
        forwardtest_series(history, early)


def test_forwardtest_series_rejects_history_after_selection_date(history, forecast):
    with pytest.raises(LookAheadError):
        forwardtest_series(history, forecast, selection_date=history.dates[-5])


def test_select_runs_every_candidate_and_ranks_by_return(history):
    selection = select_strategy(DEFAULT_CANDIDATES, history, window=HORIZON)
    assert len(selection.ranked) == len(DEFAULT_CANDIDATES)
    returns = [candidate.report.total_return for candidate in selection.ranked]
    assert returns == sorted(returns, reverse=True)
    assert selection.chosen.report.total_return == max(returns)
    assert selection.mode is SelectionMode.BACKTEST
    assert selection.window == (history.dates[-HORIZON], history.dates[-1])


def test_candidate_trades_only_the_window(history):
    candidate = evaluate_candidate(parse_spec("EMA"), history, HORIZON)
    assert candidate.report.dates[0] == history.dates[-HORIZON]
    assert len(candidate.report.equity) == HORIZON
    for trade in candidate.report.trades:
        assert trade.entry_date >= history.dates[-HORIZON]


def test_tie_is_broken_and_noted(history):
    twin = [parse_spec("EMA:period=10"), parse_spec("EMA:period=10")]
    selection = select_strategy(twin, history, window=HORIZON)
    assert "tie on total return" in selection.tie_break_note


def test_forwardtest_selection_ignores_real_future(history, forecast):
    first = compare_modes(DEFAULT_CANDIDATES[:4], history, forecast, real_future(history, 11))
    second = compare_modes(DEFAULT_CANDIDATES[:4], history, forecast, real_future(history, 12))
    for mode in ("backtest", "forwardtest"):
        a, b = getattr(first, mode), getattr(second, mode)
        assert [c.spec.name for c in a.ranked] == [c.spec.name for c in b.ranked]
        assert [c.report.final_equity for c in a.ranked] == [c.report.final_equity for c in b.ranked]


def test_forwardtest_window_is_the_forecast(history, forecast):
    selection = select_strategy(
        DEFAULT_CANDIDATES, forwardtest_series(history, forecast), SelectionMode.FORWARDTEST,
        HORIZON, selection_date=history.dates[-1],
    )
    assert selection.window == (forecast.dates[0], forecast.dates[-1])


def test_forwardtest_window_must_follow_selection_date(history, forecast):
    evaluation = forwardtest_series(history, forecast)
    with pytest.raises(LookAheadError):
        select_strategy(DEFAULT_CANDIDATES, evaluation, "FORWARDTEST", HORIZON + 5, selection_date=history.dates[-1])


def test_compare_modes_counts_runs_and_trades_future(history, forecast):
    candidates = DEFAULT_CANDIDATES[:5]
    future = real_future(history, 11)
    comparison = compare_modes(candidates, history, forecast, future)
    assert comparison.runs == 2 * len(candidates) + 2
    for pick in (comparison.backtest_on_future, comparison.forwardtest_on_future):
        assert pick.report.dates[0] == future.dates[0]
        assert len(pick.report.equity) == HORIZON
    assert comparison.backtest_on_future.spec == comparison.backtest.chosen.spec
    assert comparison.forwardtest_on_future.spec == comparison.forwardtest.chosen.spec
    assert [row["mode"] for row in comparison.rows()] == ["backtest", "forwardtest"]
    assert "flags" not in comparison.rows()[0]


def test_compare_modes_errors(history, forecast):
    with pytest.raises(ArgumentError):
        compare_modes(DEFAULT_CANDIDATES, history, forecast, history[:0])
    with pytest.raises(ArgumentError):
        compare_modes(DEFAULT_CANDIDATES, history, forecast, history[-HORIZON:])


def test_select_errors(history):
    with pytest.raises(ArgumentError):
        select_strategy([], history)
    with pytest.raises(ArgumentError):
        select_strategy(DEFAULT_CANDIDATES, history, window=1)
    with pytest.raises(SizeError):
        select_strategy(DEFAULT_CANDIDATES, history[:40], window=HORIZON)
    with pytest.raises(ValueError):
        select_strategy(DEFAULT_CANDIDATES, history, mode="SIDEWAYS")
