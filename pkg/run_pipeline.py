import argparse
import sys
from pathlib import Path

# Add the src directory to the Python path
src_path = Path(__file__).parent / "src"
sys.path.append(str(src_path))

from forwardtest.cli import run_full_pipeline


def main():
    parser = argparse.ArgumentParser(description="Run every forwardtest stage on one OHLC CSV.")
    parser.add_argument("csv", help="OHLC CSV (Date,Open,High,Low,Close,Adj Close,Volume)")
    parser.add_argument("--out", default="forwardtest_runs")
    parser.add_argument("--config")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--second-csv", help="second ticker for the synchrony stage")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args()
    sys.exit(run_full_pipeline(args.csv, args.out, args.config, args.seed, args.second_csv, quiet=not args.verbose))


if __name__ == "__main__":
    main()
