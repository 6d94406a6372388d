import datetime as dt

import numpy as np
import pytest

from src.forwardtest.errors import ArgumentError, FormatError, ShapeError
from src.forwardtest.forecast import ForecastSeries, future_trading_days, load_forecast


def test_future_trading_days_skip_weekends():
    days = future_trading_days(dt.date(2020, 1, 3), 3)  # a Friday
    assert days == [dt.date(2020, 1, 6), dt.date(2020, 1, 7), dt.date(2020, 1, 8)]
    with pytest.raises(ArgumentError):
        future_trading_days(dt.date(2020, 1, 3), 0)


def test_forecast_shape_checks():
    dates = future_trading_days(dt.date(2020, 1, 3), 3)
    with pytest.raises(ShapeError):
        ForecastSeries("m", dates, {"close": [1.0, 2.0]})
    with pytest.raises(ArgumentError):
        ForecastSeries("m", dates, {"volume": [1.0, 2.0, 3.0]})
    with pytest.raises(ArgumentError):
        ForecastSeries("m", dates, {})


def test_ohlc_violations_are_reported_not_enforced():
    dates = future_trading_days(dt.date(2020, 1, 3), 2)
    forecast = ForecastSeries("m", dates, {
        "open": [10.0, 10.0],
        "high": [11.0, 9.0],
        "low": [9.0, 10.5],
        "close": [10.5, 10.0],
    })
    problems = forecast.ohlc_violations()
    assert len(problems) == 1
    assert problems[0].startswith("2020-01-07")
    assert "low above high" in problems[0]
    assert len(forecast.to_price_series("X")) == 2


def test_close_only_forecast_is_not_ohlc():
    dates = future_trading_days(dt.date(2020, 1, 3), 2)
    forecast = ForecastSeries("arima", dates, {"close": [1.0, 2.0]})
    assert not forecast.is_ohlc
    assert forecast.ohlc_violations() == []
    with pytest.raises(ArgumentError):
        forecast.to_price_series()
    assert list(forecast.to_frame().columns) == ["date", "value"]


def test_load_forecast_reads_written_frame(tmp_path):
    dates = future_trading_days(dt.date(2020, 1, 3), 4)
    values = {name: np.linspace(10, 11, 4) + i for i, name in enumerate(("open", "high", "low", "close"))}
    path = tmp_path / "forecast.csv"
    ForecastSeries("dnn", dates, values).to_frame().to_csv(path, index=False, float_format="%.17g")

    loaded = load_forecast(path)
    assert loaded.model_id == "forecast"
    assert loaded.mode == "loaded"
    assert list(loaded.dates) == dates
    assert loaded.is_ohlc
    np.testing.assert_array_equal(loaded["high"], values["high"])


def test_load_forecast_value_column_is_the_close(tmp_path):
    path = tmp_path / "arima.csv"
    path.write_text("date,value\n2020-01-06,10.5\n2020-01-07,10.75\n", encoding="utf-8")
    loaded = load_forecast(path, "arima")
    assert loaded.components == ["close"]
    assert loaded["close"].tolist() == [10.5, 10.75]


def test_load_forecast_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_forecast(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("date,close\n06/01/2020,10.5\n", encoding="utf-8")
    with pytest.raises(FormatError):
        load_forecast(bad)
    undated = tmp_path / "undated.csv"
    undated.write_text("day,close\n2020-01-06,10.5\n", encoding="utf-8")
    with pytest.raises(FormatError):
        load_forecast(undated)
