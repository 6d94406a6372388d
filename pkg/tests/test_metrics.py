import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.forwardtest.backtest import BacktestReport, TradeRecord
from src.forwardtest.errors import DomainError, ShapeError
from src.forwardtest.metrics import expectancy, forecast_errors, max_drawdown, risk_metrics
from tests.helpers import make_series


def brute_mdd(equity):
    worst = 0.0
    for t in range(len(equity)):
        for tau in range(t, len(equity)):
            worst = max(worst, (equity[t] - equity[tau]) / equity[t])
    return worst


def report_for(equity, profits=()):
    dates = tuple(make_series(np.ones(len(equity))).dates)
    trades = tuple(TradeRecord(dates[0], 1.0, dates[1], 1.0, 1.0, 0.0, p, p) for p in profits)
    return BacktestReport(trades, np.asarray(equity, dtype=float), dates, float(equity[0]), 0.0)


def test_perfect_forecast():
    errors = forecast_errors([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert (errors.mse, errors.rmse, errors.mae, errors.mape, errors.evs) == (0.0, 0.0, 0.0, 0.0, 1.0)


def test_two_point_errors():
    errors = forecast_errors([1.0, 3.0], [2.0, 2.0])
    assert errors.mse == 1.0 and errors.rmse == 1.0 and errors.mae == 1.0
    assert errors.mape == pytest.approx((1 + 1 / 3) / 2)
    assert errors.evs == pytest.approx(0.0)
    assert set(errors.to_dict()) == {"MSE", "RMSE", "MAE", "MAPE", "EVS"}


def test_mean_forecast_explains_nothing():
    y = np.array([3.0, 7.0, 1.0, 9.0])
    assert forecast_errors(y, np.full(4, y.mean())).evs == pytest.approx(0.0, abs=1e-12)


def test_rmse_squared_is_mse():
    rng = np.random.default_rng(0)
    y = rng.uniform(10, 20, 30)
    errors = forecast_errors(y, y + rng.normal(size=30))
    assert errors.rmse ** 2 == pytest.approx(errors.mse, rel=1e-12)


def test_forecast_error_domain():
    with pytest.raises(DomainError):
        forecast_errors([0.0, 1.0], [0.5, 1.0])
    assert forecast_errors([0.0, 1.0], [0.5, 1.0], include_mape=False).mape is None
    with pytest.raises(ShapeError):
        forecast_errors([1.0, 2.0], [1.0, 2.0, 3.0])


def test_max_drawdown_single_trough():
    assert max_drawdown([100, 120, 90, 110]) == pytest.approx(0.25)
    assert max_drawdown([100, 100, 101, 150]) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=1.0, max_value=1000.0), min_size=1, max_size=200))
def test_max_drawdown_matches_brute_force(curve):
    mdd = max_drawdown(curve)
    assert mdd == pytest.approx(brute_mdd(curve), abs=1e-12)
    assert 0.0 <= mdd < 1.0
    assert (mdd == 0.0) == all(b >= a for a, b in zip(curve, curve[1:]))


def test_expectancy():
    assert expectancy([10.0, -5.0, 20.0, -5.0]) == pytest.approx(1.0)
    assert expectancy([]) is None
    assert expectancy([3.0, 4.0]) is None


def test_risk_metrics_formulas():
    equity = [100.0, 102.0, 99.0, 104.0, 103.0]
    metrics = risk_metrics(report_for(equity, profits=(4.0, -1.0)))
    returns = np.diff(equity) / equity[:-1]
    assert metrics.total_return == pytest.approx(3.0)
    assert metrics.sharpe == pytest.approx(returns.mean() / returns.std(ddof=1) * math.sqrt(252))
    downside = returns[returns < 0]
    assert metrics.sortino == pytest.approx(returns.mean() / math.sqrt(np.mean(downside ** 2)) * math.sqrt(252))
    assert metrics.mdd == pytest.approx(3.0 / 102.0)
    assert metrics.calmar == pytest.approx(returns.mean() * 252 / metrics.mdd)
    assert metrics.expectancy == pytest.approx((0.5 * 4.0 - 0.5 * 1.0) / 1.0)
    assert metrics.n_trades == 2
    assert metrics.flags == ()


def test_undefined_ratios_are_flagged():
    rising = risk_metrics(report_for([100.0, 101.0, 103.0, 106.0]))
    assert rising.sortino is None and rising.calmar is None
    assert "sortino_undefined_no_downside" in rising.flags
    assert "calmar_undefined_zero_drawdown" in rising.flags
    assert "expectancy_undefined_no_losing_trade" in rising.flags

    flat = risk_metrics(report_for([100.0, 100.0, 100.0]))
    assert flat.sharpe is None
    assert "sharpe_undefined_zero_volatility" in flat.to_dict()["flags"]
