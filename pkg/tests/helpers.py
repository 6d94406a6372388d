import datetime as dt
import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.forwardtest.ingest import bars_from_arrays


def make_series(closes, ticker="TEST", start=dt.date(2020, 1, 6), spread=0.01):
    """Coherent bars around a close path: open = previous close, high/low padded by `spread`."""
    closes = np.asarray(closes, dtype=float)
    opens = np.r_[closes[0], closes[:-1]]
    highs = np.maximum(opens, closes) * (1 + spread)
    lows = np.minimum(opens, closes) * (1 - spread)
    dates = [ts.date() for ts in pd.bdate_range(start=start, periods=len(closes))]
    return bars_from_arrays(ticker, dates, opens, highs, lows, closes)


def random_walk(n, seed=0, start=50.0, sigma=0.015):
    rng = np.random.default_rng(seed)
    return start * np.exp(np.cumsum(rng.normal(0.0003, sigma, n)))


def published_csv(name):
    """Path of a published price file under FORWARDTEST_DATA_DIR, else skip."""
    data_dir = os.environ.get("FORWARDTEST_DATA_DIR")
    if not data_dir or not (Path(data_dir) / name).exists():
        pytest.skip(f"{name} not available (set FORWARDTEST_DATA_DIR)")
    return Path(data_dir) / name
