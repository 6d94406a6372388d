import datetime as dt
import hashlib
import logging
import platform
import traceback
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import matplotlib
import numpy as np
import pandas as pd
import scipy

from . import __version__
from .backtest import FILL_RULE
from .cluster import cluster_report, elbow_scan, volatility_feature_matrix, zscore_standardize
from .config import PipelineConfig
from .dnn_forecast import (
    forecast_recursive,
    forecast_validation,
    grid_search,
    load_model,
    model_to_bytes,
    prepare_pairs,
)
from .errors import ArgumentError, SizeError
from .exporter import ArtifactWriter
from .forecast import ForecastSeries, load_forecast
from .indicators import DEFAULT_CANDIDATES, IndicatorSpec
from .ingest import (
    COMPONENTS,
    PriceSeries,
    fetch_remote_csv,
    load_series,
    minmax_normalize,
    parse_ohlc_csv,
    serialize_ohlc_csv,
    split_train_test,
)
from .metrics import EXPECTANCY_DEFINITION, forecast_errors
from .plots import elbow_chart, equity_chart, forecast_chart
from .report import ReportGenerator
from .returns_vol import VolatilityKind, volatility, volatility_table
from .select import SelectionMode, compare_modes, evaluate_candidate, forwardtest_series, select_strategy
from .stat_forecast import acf_pacf, adf_test, arima_predict, auto_arima, difference
from .synchrony import dtw_distance, pearson, rolling_pearson

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
MODEL_FILE = "models/dnn_{component}.bin"


@dataclass
class StageResult:
    """Stores the outcome of one pipeline stage."""
    stage: str
    success: bool = False
    outputs: List[str] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    exception: Optional[BaseException] = None


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def library_versions() -> Dict[str, str]:
    return {
        "forwardtest": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
    }


class PipelineProcessor:
    """Main coordinator: runs one stage at a time into an output directory."""

    def __init__(self, output_dir: Union[str, Path], config: Optional[PipelineConfig] = None, verbose: bool = True):
        self.output_dir = Path(output_dir)
        self.config = config or PipelineConfig()
        self.verbose = verbose
        self.logger = logging.getLogger("PipelineProcessor")
        self.inputs: List[Dict[str, str]] = []
        self._handlers: List[logging.Handler] = []

    def _setup_logging(self, stage: str) -> None:
        """Console plus `<out>/logs/forwardtest_<stage>.log` for this stage."""
        log_dir = self.output_dir / "logs"
        log_dir.mkdir(parents=True, exist_ok=True)

        c_handler = logging.StreamHandler()
        c_handler.setLevel(logging.INFO if self.verbose else logging.WARNING)
        f_handler = logging.FileHandler(log_dir / f"forwardtest_{stage}.log", mode="w", encoding="utf-8")
        for handler in (c_handler, f_handler):
            handler.setFormatter(logging.Formatter(LOG_FORMAT))
        self._handlers = [c_handler, f_handler]

        for name in (__package__, "PipelineProcessor", "ArtifactWriter", "ReportGenerator", "ConfigReader"):
            logger = logging.getLogger(name)
            logger.setLevel(logging.DEBUG)
            for handler in self._handlers:
                logger.addHandler(handler)
        f_handler.setLevel(logging.DEBUG)

    def _close_logging(self) -> None:
        for name in (__package__, "PipelineProcessor", "ArtifactWriter", "ReportGenerator", "ConfigReader"):
            logger = logging.getLogger(name)
            for handler in self._handlers:
                logger.removeHandler(handler)
        for handler in self._handlers:
            handler.close()
        self._handlers = []

    def _run(self, stage: str, body: Callable[..., Dict[str, Any]], *args, **kwargs) -> StageResult:
        result = StageResult(stage)
        self.inputs = []
        writer = ArtifactWriter(self.output_dir)
        self._setup_logging(stage)
        try:
            self.logger.info(f"Running stage {stage} into {self.output_dir}")
            result.summary = body(writer, result, *args, **kwargs) or {}
            result.success = True
            self.logger.info(f"Stage {stage} finished: {len(writer.outputs())} files, {len(result.warnings)} warnings")
        except Exception as e:
            error_details = traceback.format_exc()
            self.logger.error(f"Error in stage {stage}: {type(e).__name__}: {str(e)}")
            self.logger.debug(f"Error details: {error_details}")
            result.errors.append(f"{type(e).__name__}: {e}")
            result.exception = e
            writer.cleanup_failed()
        finally:
            result.outputs = writer.outputs()
            try:
                self._write_manifest(result)
            finally:
                self._close_logging()
        return result

    def _write_manifest(self, result: StageResult) -> None:
        manifest = {
            "command": result.stage,
            "success": result.success,
            "seed": self.config.seed,
            "config_hash": self.config.config_hash,
            "config": self.config.to_dict(),
            "inputs": self.inputs,
            "versions": library_versions(),
            "outputs": [{"path": name, "sha256": file_sha256(self.output_dir / name)} for name in result.outputs],
            "errors": result.errors,
            "warnings": result.warnings,
        }
        ArtifactWriter(self.output_dir).write_json("manifest.json", manifest)

    def _record_input(self, source: str, payload: Optional[bytes] = None) -> None:
        digest = hashlib.sha256(payload).hexdigest() if payload is not None else file_sha256(source)
        name = source if source.startswith(("http://", "https://")) else Path(source).name
        self.inputs.append({"name": name, "sha256": digest})

    def _load(self, source: Union[str, Path], result: StageResult, ticker: Optional[str] = None) -> PriceSeries:
        """A price series from a file path or, when allowed, an http(s) URL."""
        source = str(source)
        strict = self.config.ingest.strict
        if source.startswith(("http://", "https://")):
            text = fetch_remote_csv(source, self.config.fetch)
            self._record_input(source, text.encode("utf-8"))
            name = ticker or source.rstrip("/").rsplit("/", 1)[-1].split(".")[0].upper()
            series = parse_ohlc_csv(text, ticker=name, strict=strict)
        else:
            series = load_series(source, ticker, strict=strict)
            self._record_input(source)
        for row in series.rejected:
            result.warnings.append(f"{series.ticker}: rejected line {row.line}: {row.reason}")
            self.logger.warning(f"{series.ticker}: rejected line {row.line}: {row.reason}")
        self.logger.info(f"Loaded {series.ticker}: {len(series)} bars, {series.dates[0]}..{series.dates[-1]}")
        return series

    def _load_forecast(self, path: Union[str, Path]) -> ForecastSeries:
        self._record_input(str(path))
        return load_forecast(path)

    def _holdout(self, series: PriceSeries, horizon: int) -> tuple:
        if horizon < 1:
            raise ArgumentError(f"horizon must be >= 1, got {horizon}")
        if len(series) <= horizon:
            raise SizeError(f"{series.ticker}: {len(series)} bars leave nothing before a {horizon}-bar hold-out")
        return series[:-horizon], series[-horizon:]

    # -- stages ------------------------------------------------------------------

    def _ingest(self, writer, result, source, ticker=None, train_end: Optional[dt.date] = None):
        series = self._load(source, result, ticker)
        summary = {
            "ticker": series.ticker,
            "bars": len(series),
            "first_date": series.dates[0],
            "last_date": series.dates[-1],
            "rejected": [{"line": row.line, "reason": row.reason} for row in series.rejected],
        }
        writer.write_text(f"{series.ticker}.csv", serialize_ohlc_csv(series))
        if train_end is not None:
            train, test = split_train_test(series, train_end)
            writer.write_text(f"{series.ticker}_train.csv", serialize_ohlc_csv(train))
            writer.write_text(f"{series.ticker}_test.csv", serialize_ohlc_csv(test))
            summary.update({"train_end": train_end, "train_bars": len(train), "test_bars": len(test)})
        writer.write_json("ingest.json", summary)
        return summary

    def _volatility(self, writer, result, sources: Sequence, window: Optional[int] = None):
        window = window or self.config.volatility.window
        ppy = self.config.volatility.periods_per_year
        tables, summary = [], {"window": window, "periods_per_year": ppy, "tickers": {}}
        for source in sources:
            series = self._load(source, result)
            table = volatility_table(series, window, ppy)
            summary["tickers"][series.ticker] = table.to_dict(orient="records")
            table.insert(0, "ticker", series.ticker)
            tables.append(table)

            rolling = pd.concat([volatility(series, kind, window, ppy)[0] for kind in VolatilityKind], axis=1)
            rolling.index = [ts.date().isoformat() for ts in rolling.index]
            writer.write_csv(f"volatility_{series.ticker}.csv", rolling.rename_axis("date").reset_index())
        writer.write_csv("volatility_summary.csv", pd.concat(tables, ignore_index=True))
        writer.write_json("volatility.json", summary)
        return summary

    def _cluster(self, writer, result, sources: Sequence, k: Optional[int] = None):
        cfg = self.config.cluster
        window = self.config.volatility.window
        series_list = [self._load(source, result) for source in sources]
        matrix = zscore_standardize(volatility_feature_matrix(series_list, window))
        scan = elbow_scan(matrix, range(cfg.k_min, cfg.k_max + 1), self.config.seed, cfg.restarts, cfg.max_iter)
        chosen = k or scan.knee
        if chosen not in scan.clusterings:
            raise ArgumentError(f"k={chosen} outside the scanned range {cfg.k_min}..{cfg.k_max}")
        clustering = scan.clusterings[chosen]
        report = cluster_report(matrix, clustering)
        for ticker, spread in report["tickers"].items():
            if not spread["covers_all_clusters"]:
                result.warnings.append(f"{ticker} has no rows in some of the {chosen} clusters")

        writer.write_csv("elbow.csv", pd.DataFrame({"k": scan.k_values, "wss": scan.wss, "chord_distance": scan.chord_distance}))
        writer.write_csv("assignments.csv", pd.DataFrame({
            "ticker": [label[0] for label in matrix.labels],
            "date": [label[1].isoformat() for label in matrix.labels],
            "cluster": clustering.assignments,
        }))
        writer.write_svg("elbow.svg", elbow_chart(scan))
        summary = {
            "window": window,
            "rows": len(matrix),
            "elbow": scan.to_dict(),
            "k": chosen,
            "centroids": clustering.centroids,
            "report": report,
        }
        writer.write_json("cluster.json", summary)
        return summary

    def _synchrony(self, writer, result, first, second, window: Optional[int] = None):
        cfg = self.config.synchrony
        window = window or cfg.window
        a, b = self._load(first, result), self._load(second, result)
        joined = pd.concat([a.to_frame()["close"], b.to_frame()["close"]], axis=1, join="inner", keys=[a.ticker, b.ticker])
        if len(joined) < 2:
            raise SizeError(f"{a.ticker} and {b.ticker} share {len(joined)} dates")
        x, y = joined.iloc[:, 0].to_numpy(), joined.iloc[:, 1].to_numpy()
        rolling = rolling_pearson(x, y, window)
        undefined = int(np.isnan(rolling).sum())
        if undefined:
            result.warnings.append(f"{undefined} rolling windows are constant")

        raw = dtw_distance(x, y, cfg.band)
        normalized = dtw_distance(minmax_normalize(x)[0], minmax_normalize(y)[0], cfg.band)
        dtw = normalized if cfg.normalize else raw
        writer.write_json("dtw_path.json", {"normalized": cfg.normalize, **dtw.to_dict()})

        dates = [ts.date().isoformat() for ts in joined.index]
        writer.write_csv("rolling_pearson.csv", pd.DataFrame({"date": dates[window - 1:], "pearson": rolling}))
        summary = {
            "tickers": [a.ticker, b.ticker],
            "common_dates": len(joined),
            "pearson": pearson(x, y),
            "rolling_window": window,
            "rolling_mean": float(np.nanmean(rolling)) if undefined < len(rolling) else None,
            "rolling_undefined": undefined,
            "dtw": {
                "cost_raw": raw.cost,
                "cost_normalized": normalized.cost,
                "path_from": "normalized" if cfg.normalize else "raw",
                "path_length": len(dtw.path),
                "band": cfg.band,
            },
        }
        writer.write_json("synchrony.json", summary)
        return summary

    def _adf(self, writer, result, source, max_lag: Optional[int] = None, acf_lags: int = 20):
        max_lag = max_lag if max_lag is not None else self.config.arima.adf_max_lag
        series = self._load(source, result)
        closes = series.closes
        changes = difference(closes, 1)
        level, diffed = adf_test(closes, max_lag), adf_test(changes, max_lag)
        acf, pacf = acf_pacf(changes, acf_lags)
        writer.write_csv("acf_pacf.csv", pd.DataFrame({"lag": np.arange(len(acf)), "acf": acf, "pacf": pacf}))
        summary = {"ticker": series.ticker, "close": level.to_dict(), "first_difference": diffed.to_dict()}
        writer.write_json("adf.json", summary)
        return summary

    def _arima(self, writer, result, source, horizon: Optional[int] = None):
        cfg = self.config.arima
        horizon = horizon or cfg.horizon
        series = self._load(source, result)
        history, actual = self._holdout(series, horizon)
        model = auto_arima(history.closes, range(0, cfg.p_max + 1), range(0, cfg.q_max + 1), cfg.d, cfg.transform, cfg.max_evaluations)
        failed = sorted(cell for cell, aic in model.aic_table.items() if aic is None)
        if failed:
            result.warnings.append(f"ARIMA cells without a fit: {failed}")
        predicted = arima_predict(model, history.closes, horizon)
        p, d, q = model.order
        forecast = ForecastSeries(f"arima({p},{d},{q})", actual.dates, {"close": predicted}, metadata={"transform": model.transform})
        errors = forecast_errors(actual.closes, predicted)

        writer.write_csv("arima_forecast.csv", pd.DataFrame({
            "date": [day.isoformat() for day in actual.dates],
            "actual": actual.closes,
            "predicted": predicted,
        }))
        writer.write_svg("arima_forecast.svg", forecast_chart(history, [forecast], actual))
        summary = {
            "ticker": series.ticker,
            "train_bars": len(history),
            "horizon": horizon,
            "model": model.to_dict(),
            "aic_table": {f"{p},{q}": aic for (p, q), aic in sorted(model.aic_table.items())},
            "errors": errors.to_dict(),
        }
        writer.write_json("arima.json", summary)
        return summary

    def _train_dnn(self, writer, result, source, components: Sequence[str] = COMPONENTS, horizon: Optional[int] = None):
        cfg = self.config.dnn
        horizon = horizon or cfg.horizon
        series = self._load(source, result)
        history, actual = self._holdout(series, horizon)
        grid = {"epochs": cfg.epochs, "batch_size": cfg.batch_sizes, "learning_rate": cfg.learning_rates, "optimizer": cfg.optimizers}
        validation = {"date": [day.isoformat() for day in actual.dates]}
        summary = {"ticker": series.ticker, "train_bars": len(history), "horizon": horizon, "lags": cfg.lags, "components": {}}

        for component in components:
            inputs, targets, scaler = prepare_pairs(history.component(component), cfg.lags)
            self.logger.info(f"Grid search for {component}: {len(targets)} pairs")
            search = grid_search(inputs, targets, scaler, component, grid, cfg.dropout, self.config.seed, cfg.validation_fraction)
            for cell in search.cells:
                if cell.failed:
                    result.warnings.append(f"{component}: grid cell {cell.config.to_dict()} diverged")
            writer.write_bytes(MODEL_FILE.format(component=component), model_to_bytes(search.best_model))

            one_step = forecast_validation(search.best_model, series, horizon)
            errors = forecast_errors(actual.component(component), one_step[component])
            validation[f"{component}_actual"] = actual.component(component)
            validation[f"{component}_predicted"] = one_step[component]
            summary["components"][component] = {
                "grid": search.to_dict(),
                "parameters": search.best_model.parameter_count,
                "validation": errors.to_dict(),
            }
        writer.write_csv("dnn_validation.csv", pd.DataFrame(validation))
        writer.write_json("dnn.json", summary)
        return summary

    def _forecast(self, writer, result, source, model_dir, horizon: Optional[int] = None, train_end: Optional[dt.date] = None):
        horizon = horizon or self.config.dnn.horizon
        series = self._load(source, result)
        actual = None
        if train_end is not None:
            series, future = split_train_test(series, train_end)
            actual = future[:horizon]
        models = {}
        for component in COMPONENTS:
            path = Path(model_dir) / MODEL_FILE.format(component=component)
            models[component] = load_model(path)
            self._record_input(str(path))
        forecast = forecast_recursive(models, series, horizon)
        for problem in forecast.ohlc_violations():
            result.warnings.append(f"incoherent forecast bar {problem}")

        writer.write_csv("forecast.csv", forecast.to_frame())
        writer.write_svg("forecast.svg", forecast_chart(series, [forecast], actual))
        summary = {
            "ticker": series.ticker,
            "model_id": forecast.model_id,
            "seed_last_date": series.dates[-1],
            "start_date": forecast.start_date,
            "horizon": forecast.horizon,
            "violations": forecast.ohlc_violations(),
        }
        if actual is not None and len(actual) == horizon:
            summary["errors"] = {c: forecast_errors(actual.component(c), forecast[c]).to_dict() for c in COMPONENTS}
        writer.write_json("forecast.json", summary)
        return summary

    def _backtest(self, writer, result, source, spec: IndicatorSpec, window: Optional[int] = None):
        cfg = self.config.backtest
        window = window or self.config.select.window
        series = self._load(source, result)
        candidate = evaluate_candidate(spec, series, window, cfg.budget, cfg.fee_rate, cfg.periods_per_year)
        report = candidate.report

        writer.write_csv("blotter.csv", report.blotter_frame())
        writer.write_csv("equity.csv", report.equity_frame())
        writer.write_svg("equity.svg", equity_chart({spec.name: report}, f"{series.ticker} {spec.name}"))
        summary = {
            "ticker": series.ticker,
            "strategy": spec.to_dict(),
            "window": window,
            "budget": cfg.budget,
            "fee_rate": cfg.fee_rate,
            "fill_rule": FILL_RULE,
            "final_equity": report.final_equity,
            "metrics": candidate.metrics.to_dict(),
            "expectancy_definition": EXPECTANCY_DEFINITION,
            "exit_reasons": [trade.exit_reason for trade in report.trades],
        }
        writer.write_json("backtest.json", summary)
        return summary

    def _select(self, writer, result, source, mode, forecast_path=None, candidates: Optional[Sequence[IndicatorSpec]] = None,
                window: Optional[int] = None, train_end: Optional[dt.date] = None):
        cfg = self.config.backtest
        mode = SelectionMode(mode)
        candidates = list(candidates or DEFAULT_CANDIDATES)
        series = self._load(source, result)
        selection_date = None
        if mode is SelectionMode.FORWARDTEST:
            if forecast_path is None:
                raise ArgumentError("forwardtest selection needs a forecast file")
            forecast = self._load_forecast(forecast_path)
            history = series[:bisect_left(series.dates, forecast.start_date)]
            if not len(history):
                raise ArgumentError(f"no history before the forecast start {forecast.start_date}")
            evaluation = forwardtest_series(history, forecast)
            selection_date = history.dates[-1]
            window = window or forecast.horizon
        else:
            evaluation = series
            if train_end is not None:
                evaluation = series[:bisect_right(series.dates, train_end)]
                if not len(evaluation):
                    raise ArgumentError(f"no bars on or before the train end {train_end}")
                selection_date = evaluation.dates[-1]
            window = window or self.config.select.window

        selection = select_strategy(candidates, evaluation, mode, window, cfg.budget, cfg.fee_rate, cfg.periods_per_year, selection_date)
        if selection.tie_break_note:
            result.warnings.append(selection.tie_break_note)
        writer.write_csv("selection.csv", pd.DataFrame([
            {"rank": rank, "strategy": candidate.spec.name,
             **{k: v for k, v in candidate.metrics.to_dict().items() if k != "flags"}}
            for rank, candidate in enumerate(selection.ranked, start=1)
        ]))
        summary = {"ticker": series.ticker, "selection_date": selection_date, **selection.to_dict()}
        writer.write_json("selection.json", summary)
        return summary

    def _compare(self, writer, result, source, forecast_path, candidates: Optional[Sequence[IndicatorSpec]] = None):
        cfg = self.config.backtest
        candidates = list(candidates or DEFAULT_CANDIDATES)
        series = self._load(source, result)
        forecast = self._load_forecast(forecast_path)
        cut = bisect_left(series.dates, forecast.start_date)
        if cut == 0:
            raise ArgumentError(f"no history before the forecast start {forecast.start_date}")
        history, future = series[:cut], series[cut:cut + forecast.horizon]
        if len(future) < forecast.horizon:
            result.warnings.append(f"real future has {len(future)} bars, forecast horizon is {forecast.horizon}")

        comparison = compare_modes(candidates, history, forecast, future, cfg.budget, cfg.fee_rate, cfg.periods_per_year)
        writer.write_csv("comparison.csv", pd.DataFrame(comparison.rows()))
        writer.write_svg("comparison_equity.svg", equity_chart({
            f"backtest pick {comparison.backtest_on_future.spec.name}": comparison.backtest_on_future.report,
            f"forwardtest pick {comparison.forwardtest_on_future.spec.name}": comparison.forwardtest_on_future.report,
        }, f"{series.ticker}: picks traded on the real future"))
        summary = {"ticker": series.ticker, "selection_date": history.dates[-1], **comparison.to_dict()}
        writer.write_json("comparison.json", summary)
        return summary

    def _report(self, writer, result):
        generator = ReportGenerator(self.output_dir)
        writer.write_html("report.html", generator.generate_html())
        return {"report": "report.html"}

    # -- public entry points ---------------------------------------------------------

    def ingest(self, source, ticker: Optional[str] = None, train_end: Optional[dt.date] = None) -> StageResult:
        return self._run("ingest", self._ingest, source, ticker, train_end)

    def volatility(self, sources: Sequence, window: Optional[int] = None) -> StageResult:
        return self._run("volatility", self._volatility, sources, window)

    def cluster(self, sources: Sequence, k: Optional[int] = None) -> StageResult:
        return self._run("cluster", self._cluster, sources, k)

    def synchrony(self, first, second, window: Optional[int] = None) -> StageResult:
        return self._run("synchrony", self._synchrony, first, second, window)

    def adf(self, source, max_lag: Optional[int] = None) -> StageResult:
        return self._run("adf", self._adf, source, max_lag)

    def arima(self, source, horizon: Optional[int] = None) -> StageResult:
        return self._run("arima", self._arima, source, horizon)

    def train_dnn(self, source, components: Sequence[str] = COMPONENTS, horizon: Optional[int] = None) -> StageResult:
        return self._run("train-dnn", self._train_dnn, source, components, horizon)

    def forecast(self, source, model_dir, horizon: Optional[int] = None, train_end: Optional[dt.date] = None) -> StageResult:
        return self._run("forecast", self._forecast, source, model_dir, horizon, train_end)

    def backtest(self, source, spec: IndicatorSpec, window: Optional[int] = None) -> StageResult:
        return self._run("backtest", self._backtest, source, spec, window)

    def select(self, source, mode=SelectionMode.BACKTEST, forecast_path=None, candidates=None, window: Optional[int] = None,
               train_end: Optional[dt.date] = None) -> StageResult:
        return self._run("select", self._select, source, mode, forecast_path, candidates, window, train_end)

    def compare(self, source, forecast_path, candidates=None) -> StageResult:
        return self._run("compare", self._compare, source, forecast_path, candidates)

    def report(self) -> StageResult:
        return self._run("report", self._report)
