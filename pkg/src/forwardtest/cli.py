"""Command-line entry point: one subcommand per pipeline stage."""

import argparse
import dataclasses
import datetime as dt
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence

from . import __version__
from .config import PipelineConfig, load_config
from .errors import ConfigurationError, ForwardtestError, SizeError
from .indicators import parse_spec
from .ingest import COMPONENTS, load_series
from .pipeline import PipelineProcessor, StageResult
from .select import SelectionMode


def _list_of(kind: Callable) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        try:
            return tuple(kind(part.strip()) for part in text.split(",") if part.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}")
    return parse


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}")


def _strategy(text: str):
    try:
        return parse_spec(text)
    except ForwardtestError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file, one [section] per module")
    common.add_argument("--seed", type=int, help="overrides every seed")
    common.add_argument("--out", default="forwardtest_out", help="output directory (default: %(default)s)")
    common.add_argument("--quiet", action="store_true", help="only warnings and errors on the console")

    parser = argparse.ArgumentParser(prog="forwardtest", description="Forecast-driven strategy selection pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text)

    p = add("ingest", "parse and validate an OHLC CSV, optionally split it")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--csv", help="OHLC CSV file")
    source.add_argument("--url", help="OHLC CSV over https (needs [fetch] allow_network)")
    p.add_argument("--ticker")
    p.add_argument("--train-end", type=_date, help="last training date, YYYY-MM-DD")
    p.add_argument("--permissive", action="store_true", help="skip bad rows instead of failing")

    p = add("volatility", "rolling OHLC volatility estimators and their summary")
    p.add_argument("--csv", nargs="+", required=True)
    p.add_argument("--window", type=int)

    p = add("cluster", "k-means elbow scan over the per-day volatility features")
    p.add_argument("--csv", nargs="+", required=True)
    p.add_argument("--window", type=int)
    p.add_argument("--k", type=int, help="clustering to report (default: the knee)")
    p.add_argument("--k-max", type=int)
    p.add_argument("--restarts", type=int)

    p = add("synchrony", "Pearson correlation and DTW between two close series")
    p.add_argument("--csv", nargs=2, required=True, metavar=("FIRST", "SECOND"))
    p.add_argument("--window", type=int)
    p.add_argument("--band", type=int)

    p = add("adf", "augmented Dickey-Fuller test of the close and its first difference")
    p.add_argument("--csv", required=True)
    p.add_argument("--max-lag", type=int)

    p = add("arima", "order search by AIC and a hold-out close forecast")
    p.add_argument("--csv", required=True)
    p.add_argument("--horizon", type=int)
    p.add_argument("--p-max", type=int)
    p.add_argument("--q-max", type=int)
    p.add_argument("--transform", choices=["level", "log"])

    p = add("train-dnn", "grid-search one MLP per OHLC component")
    p.add_argument("--csv", required=True)
    p.add_argument("--components", type=_list_of(str), default=COMPONENTS)
    p.add_argument("--horizon", type=int)
    p.add_argument("--lags", type=int)
    p.add_argument("--epochs", type=_list_of(int))
    p.add_argument("--learning-rates", type=_list_of(float))
    p.add_argument("--optimizers", type=_list_of(str))

    p = add("forecast", "recursive OHLC forecast from trained models")
    p.add_argument("--csv", required=True)
    p.add_argument("--models", required=True, help="directory holding models/dnn_<component>.bin")
    p.add_argument("--horizon", type=int)
    p.add_argument("--train-end", type=_date, help="forecast from this date instead of the last bar")

    p = add("select", "rank candidate strategies by backtest or forwardtest")
    p.add_argument("--csv", required=True)
    p.add_argument("--mode", choices=[m.value.lower() for m in SelectionMode], default="backtest")
    p.add_argument("--forecast", help="forecast CSV, required in forwardtest mode")
    p.add_argument("--train-end", type=_date, help="backtest mode: select on bars up to this date only")
    p.add_argument("--strategy", type=_strategy, action="append", help="KIND[:key=value,...]; repeatable")
    p.add_argument("--window", type=int)
    p.add_argument("--budget", type=float)
    p.add_argument("--fee", type=float)

    p = add("backtest", "simulate one strategy on the last bars of a series")
    p.add_argument("--csv", required=True)
    p.add_argument("--strategy", type=_strategy, required=True, help="KIND[:key=value,...]")
    p.add_argument("--window", type=int)
    p.add_argument("--budget", type=float)
    p.add_argument("--fee", type=float)

    p = add("compare", "select in both modes and trade both picks on the real future")
    p.add_argument("--csv", required=True, help="series covering the history and the real future")
    p.add_argument("--forecast", required=True)
    p.add_argument("--strategy", type=_strategy, action="append")
    p.add_argument("--budget", type=float)
    p.add_argument("--fee", type=float)

    add("report", "render the JSON and SVG outputs of --out into report.html")
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file values, then flag overrides."""
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)

    def get(name: str):
        return getattr(args, name, None)

    if get("permissive"):
        config = config.with_overrides("ingest", strict=False)
    config = config.with_overrides("volatility", window=get("window") if args.command in ("volatility", "cluster") else None)
    config = config.with_overrides("cluster", k_max=get("k_max"), restarts=get("restarts"))
    if args.command == "synchrony":
        config = config.with_overrides("synchrony", window=get("window"), band=get("band"))
    config = config.with_overrides("arima", adf_max_lag=get("max_lag"), p_max=get("p_max"), q_max=get("q_max"), transform=get("transform"))
    if args.command == "arima":
        config = config.with_overrides("arima", horizon=get("horizon"))
    if args.command in ("train-dnn", "forecast"):
        config = config.with_overrides("dnn", horizon=get("horizon"))
    config = config.with_overrides(
        "dnn", lags=get("lags"), epochs=get("epochs"), learning_rates=get("learning_rates"), optimizers=get("optimizers")
    )
    config = config.with_overrides("backtest", budget=get("budget"), fee_rate=get("fee"))
    if args.command in ("select", "backtest"):
        config = config.with_overrides("select", window=get("window"))
    return config


def dispatch(processor: PipelineProcessor, args: argparse.Namespace) -> StageResult:
    command = args.command
    if command == "ingest":
        return processor.ingest(args.csv or args.url, args.ticker, args.train_end)
    if command == "volatility":
        return processor.volatility(args.csv)
    if command == "cluster":
        return processor.cluster(args.csv, args.k)
    if command == "synchrony":
        return processor.synchrony(args.csv[0], args.csv[1])
    if command == "adf":
        return processor.adf(args.csv)
    if command == "arima":
        return processor.arima(args.csv)
    if command == "train-dnn":
        unknown = [c for c in args.components if c not in COMPONENTS]
        if unknown:
            raise ConfigurationError(f"unknown component(s) {unknown}")
        return processor.train_dnn(args.csv, args.components)
    if command == "forecast":
        return processor.forecast(args.csv, args.models, train_end=args.train_end)
    if command == "select":
        return processor.select(args.csv, args.mode.upper(), args.forecast, args.strategy, train_end=args.train_end)
    if command == "backtest":
        return processor.backtest(args.csv, args.strategy)
    if command == "compare":
        return processor.compare(args.csv, args.forecast, args.strategy)
    return processor.report()


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; 0 on success, 1 on a module error, 2 on a usage error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    try:
        config = resolve_config(args)
        processor = PipelineProcessor(args.out, config, verbose=not args.quiet)
        result = dispatch(processor, args)
    except (ForwardtestError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1

    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if not result.success:
        error = result.exception
        print(f"error: {type(error).__name__}: {error}", file=sys.stderr)
        return 1
    print(f"{args.command}: wrote {len(result.outputs)} files to {args.out}")
    for name in result.outputs:
        print(f"  {name}")
    return 0


def run_full_pipeline(
    csv: str,
    out: str,
    config: Optional[str] = None,
    seed: Optional[int] = None,
    second_csv: Optional[str] = None,
    quiet: bool = True,
) -> int:
    """Every stage on one series, each into its own folder under `out`, then the report.

    Models train on all but the last forecast horizon, which is kept as the real future.
    """
    try:
        horizon = load_config(config).dnn.horizon
        series = load_series(csv)
        if len(series) <= horizon:
            raise SizeError(f"{series.ticker}: {len(series)} bars leave nothing before a {horizon}-bar hold-out")
        train_end = series.dates[-horizon - 1].isoformat()
    except (ForwardtestError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    common = (["--config", config] if config else []) + (["--seed", str(seed)] if seed is not None else [])
    if quiet:
        common.append("--quiet")
    root = Path(out)
    forecast_csv = str(root / "forecast" / "forecast.csv")
    steps = [
        ["ingest", "--csv", csv, "--train-end", train_end, "--out", str(root / "ingest")],
        ["volatility", "--csv", csv, "--out", str(root / "volatility")],
        ["cluster", "--csv", csv, "--out", str(root / "cluster")],
        ["adf", "--csv", csv, "--out", str(root / "adf")],
        ["arima", "--csv", csv, "--out", str(root / "arima")],
        ["train-dnn", "--csv", csv, "--out", str(root / "dnn")],
        ["forecast", "--csv", csv, "--models", str(root / "dnn"), "--train-end", train_end, "--out", str(root / "forecast")],
        ["select", "--csv", csv, "--mode", "backtest", "--train-end", train_end, "--out", str(root / "select_backtest")],
        ["select", "--csv", csv, "--mode", "forwardtest", "--forecast", forecast_csv, "--out", str(root / "select_forwardtest")],
        ["backtest", "--csv", csv, "--strategy", "ADX", "--out", str(root / "backtest")],
        ["compare", "--csv", csv, "--forecast", forecast_csv, "--out", str(root / "compare")],
    ]
    if second_csv:
        steps.append(["synchrony", "--csv", csv, second_csv, "--out", str(root / "synchrony")])
    steps.append(["report", "--out", str(root)])
    for step in steps:
        status = run_command(step + common)
        if status != 0:
            return status
    return 0


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
