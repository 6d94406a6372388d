import datetime as dt
import json

import pytest

from src.forwardtest.config import ConfigReader
from src.forwardtest.errors import EmptyPartitionError
from src.forwardtest.indicators import parse_spec
from src.forwardtest.ingest import load_series, serialize_ohlc_csv
from src.forwardtest.pipeline import PipelineProcessor, file_sha256
from tests.conftest import FAST_CONFIG, FIXTURES
from tests.helpers import make_series, random_walk

CSV = FIXTURES / "synthetic_300.csv"


@pytest.fixture(scope="module")
def config():
    return ConfigReader().read_text(FAST_CONFIG)


def processor(path, config):
    return PipelineProcessor(path, config, verbose=False)


def manifest(path):
    return json.loads((path / "manifest.json").read_text())


@pytest.fixture(scope="module")
def forecast_run(tmp_path_factory, config):
    """Models trained on all but the last 30 bars, then a forecast of those bars."""
    root = tmp_path_factory.mktemp("dnn")
    train_end = load_series(CSV).dates[-31]
    trained = processor(root / "dnn", config).train_dnn(CSV)
    forecast = processor(root / "forecast", config).forecast(CSV, root / "dnn", train_end=train_end)
    return root, trained, forecast


def test_ingest_writes_split_and_manifest(tmp_path, config):
    result = processor(tmp_path, config).ingest(CSV, "SYN", dt.date(2021, 1, 29))
    assert result.success, result.errors
    assert result.outputs == ["SYN.csv", "SYN_test.csv", "SYN_train.csv", "ingest.json"]
    assert result.summary["bars"] == 300
    assert result.summary["train_bars"] + result.summary["test_bars"] == 300
    assert (tmp_path / "SYN.csv").read_text() == serialize_ohlc_csv(load_series(CSV, "SYN"))

    record = manifest(tmp_path)
    assert record["command"] == "ingest" and record["success"] is True
    assert record["inputs"] == [{"name": "synthetic_300.csv", "sha256": file_sha256(CSV)}]
    assert [o["path"] for o in record["outputs"]] == result.outputs
    for output in record["outputs"]:
        assert output["sha256"] == file_sha256(tmp_path / output["path"])
    assert record["seed"] == 7
    assert (tmp_path / "logs" / "forwardtest_ingest.log").exists()


def test_failed_stage_cleans_up(tmp_path, config):
    result = processor(tmp_path, config).ingest(CSV, "SYN", dt.date(2022, 1, 3))
    assert not result.success
    assert isinstance(result.exception, EmptyPartitionError)
    assert result.outputs == []
    assert not (tmp_path / "SYN.csv").exists()
    record = manifest(tmp_path)
    assert record["success"] is False
    assert record["errors"][0].startswith("EmptyPartitionError")


def test_missing_input_fails_stage(tmp_path, config):
    result = processor(tmp_path, config).adf(tmp_path / "absent.csv")
    assert not result.success
    assert isinstance(result.exception, FileNotFoundError)


def test_volatility_stage(tmp_path, config):
    result = processor(tmp_path, config).volatility([CSV])
    assert result.success, result.errors
    assert set(result.outputs) == {"volatility_SYNTHETIC_300.csv", "volatility_summary.csv", "volatility.json"}
    summary = json.loads((tmp_path / "volatility.json").read_text())
    assert summary["window"] == 30
    assert [row["kind"] for row in summary["tickers"]["SYNTHETIC_300"]] == ["STDDEV", "PK", "GK", "RS", "YZ", "PR"]


def test_cluster_stage(tmp_path, config):
    result = processor(tmp_path, config).cluster([CSV])
    assert result.success, result.errors
    assert {"elbow.csv", "assignments.csv", "elbow.svg", "cluster.json"} <= set(result.outputs)
    summary = result.summary
    assert 2 <= summary["k"] <= 8
    assert summary["rows"] == 300 - 30


def test_cluster_rejects_k_outside_scan(tmp_path, config):
    result = processor(tmp_path, config).cluster([CSV], k=50)
    assert not result.success


def test_synchrony_stage(tmp_path, config):
    other = tmp_path / "other.csv"
    other.write_text(serialize_ohlc_csv(make_series(random_walk(300, seed=9), ticker="OTHER")))
    result = processor(tmp_path / "out", config).synchrony(CSV, other)
    assert result.success, result.errors
    summary = result.summary
    assert summary["common_dates"] == 300
    assert -1.0 <= summary["pearson"] <= 1.0
    assert summary["dtw"]["cost_normalized"] >= 0
    assert {"dtw_path.json", "rolling_pearson.csv", "synchrony.json"} == set(result.outputs)


def test_adf_and_arima_stages(tmp_path, config):
    adf = processor(tmp_path / "adf", config).adf(CSV)
    assert adf.success, adf.errors
    assert set(adf.summary) == {"ticker", "close", "first_difference"}

    arima = processor(tmp_path / "arima", config).arima(CSV)
    assert arima.success, arima.errors
    assert arima.summary["train_bars"] == 270
    assert len(arima.summary["aic_table"]) == 3 * 2
    assert {"arima_forecast.csv", "arima_forecast.svg", "arima.json"} == set(arima.outputs)


def test_backtest_stage(tmp_path, config):
    result = processor(tmp_path, config).backtest(CSV, parse_spec("ADX"))
    assert result.success, result.errors
    assert {"blotter.csv", "equity.csv", "equity.svg", "backtest.json"} == set(result.outputs)
    assert result.summary["window"] == 30
    assert set(result.summary["exit_reasons"]) <= {"signal", "end_of_data"}


def test_select_backtest_stage(tmp_path, config):
    result = processor(tmp_path, config).select(CSV, "BACKTEST")
    assert result.success, result.errors
    assert result.summary["mode"] == "BACKTEST"
    assert len(result.summary["ranking"]) == 15


def test_select_backtest_stops_at_train_end(tmp_path, config):
    train_end = load_series(CSV).dates[-31]
    result = processor(tmp_path, config).select(CSV, "BACKTEST", train_end=train_end)
    assert result.success, result.errors
    assert result.summary["selection_date"] == train_end
    assert result.summary["window"][1] == train_end.isoformat()
    assert dt.date.fromisoformat(result.summary["window"][0]) < train_end


def test_select_train_end_before_data_fails(tmp_path, config):
    result = processor(tmp_path, config).select(CSV, "BACKTEST", train_end=dt.date(2019, 1, 1))
    assert not result.success


def test_forwardtest_without_forecast_fails(tmp_path, config):
    result = processor(tmp_path, config).select(CSV, "FORWARDTEST")
    assert not result.success


def test_train_and_forecast_stages(forecast_run):
    root, trained, forecast = forecast_run
    assert trained.success, trained.errors
    assert [name for name in trained.outputs if name.startswith("models/")] == [
        "models/dnn_close.bin", "models/dnn_high.bin", "models/dnn_low.bin", "models/dnn_open.bin",
    ]
    assert set(trained.summary["components"]) == {"open", "high", "low", "close"}

    assert forecast.success, forecast.errors
    assert forecast.summary["horizon"] == 30
    assert forecast.summary["start_date"] == load_series(CSV).dates[-30]
    assert set(forecast.summary["errors"]) == {"open", "high", "low", "close"}
    inputs = [entry["name"] for entry in manifest(root / "forecast")["inputs"]]
    assert inputs[0] == "synthetic_300.csv"
    assert len(inputs) == 5


def test_forwardtest_and_compare_stages(forecast_run, tmp_path, config):
    root, _, _ = forecast_run
    forecast_csv = root / "forecast" / "forecast.csv"
    selection = processor(tmp_path / "select", config).select(CSV, "FORWARDTEST", forecast_csv)
    assert selection.success, selection.errors
    assert selection.summary["selection_date"] == load_series(CSV).dates[-31]

    comparison = processor(tmp_path / "compare", config).compare(CSV, forecast_csv)
    assert comparison.success, comparison.errors
    assert comparison.summary["runs"] == 2 * 15 + 2
    assert {"comparison.csv", "comparison_equity.svg", "comparison.json"} == set(comparison.outputs)


def test_report_stage(tmp_path, config):
    processor(tmp_path, config).backtest(CSV, parse_spec("RSI"))
    result = processor(tmp_path, config).report()
    assert result.success, result.errors
    assert result.outputs == ["report.html"]
    assert "backtest.json" in (tmp_path / "report.html").read_text()
