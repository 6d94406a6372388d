"""Model-agnostic predicted price paths."""

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import ArgumentError, FormatError, ShapeError
from .ingest import COMPONENTS, PriceSeries, bars_from_arrays


def future_trading_days(after: dt.date, horizon: int) -> List[dt.date]:
    """`horizon` weekdays following `after`; exchange holidays are not modelled."""
    if horizon < 1:
        raise ArgumentError(f"horizon must be >= 1, got {horizon}")
    start = pd.Timestamp(after) + pd.Timedelta(days=1)
    return [ts.date() for ts in pd.bdate_range(start=start, periods=horizon)]


@dataclass(frozen=True)
class ForecastSeries:
    """Predicted values for one or all four OHLC components.

    `values` maps component name to a vector of length `horizon`.
    OHLC coherence of the predicted bars is reported, never enforced.
    """
    model_id: str
    dates: Sequence[dt.date]
    values: Mapping[str, np.ndarray]
    mode: str = "recursive"
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        clean = {}
        for name, vector in self.values.items():
            if name not in COMPONENTS:
                raise ArgumentError(f"unknown forecast component {name!r}")
            arr = np.asarray(vector, dtype=float)
            if arr.shape != (len(self.dates),):
                raise ShapeError(f"{name}: {arr.shape[0] if arr.ndim else 0} values for {len(self.dates)} dates")
            clean[name] = arr
        if not clean:
            raise ArgumentError("forecast carries no component")
        object.__setattr__(self, "values", clean)

    @property
    def horizon(self) -> int:
        return len(self.dates)

    @property
    def start_date(self) -> dt.date:
        return self.dates[0]

    @property
    def components(self) -> List[str]:
        return [name for name in COMPONENTS if name in self.values]

    @property
    def is_ohlc(self) -> bool:
        return len(self.components) == len(COMPONENTS)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def ohlc_violations(self) -> List[str]:
        """Describe every predicted bar that breaks low <= open/close <= high."""
        if not self.is_ohlc:
            return []
        o, h, l, c = (self.values[name] for name in COMPONENTS)
        problems = []
        for i, day in enumerate(self.dates):
            issues = []
            if l[i] > h[i]:
                issues.append("low above high")
            if not l[i] <= o[i] <= h[i]:
                issues.append("open outside range")
            if not l[i] <= c[i] <= h[i]:
                issues.append("close outside range")
            if l[i] <= 0:
                issues.append("non-positive low")
            if issues:
                problems.append(f"{day}: {', '.join(issues)}")
        return problems

    def to_price_series(self, ticker: str = "") -> PriceSeries:
        if not self.is_ohlc:
            raise ArgumentError(f"forecast {self.model_id} has only {self.components}")
        return bars_from_arrays(ticker, self.dates, *(self.values[name] for name in COMPONENTS))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({name: self.values[name] for name in self.components})
        frame.insert(0, "date", [d.isoformat() for d in self.dates])
        if len(self.components) == 1:
            frame = frame.rename(columns={self.components[0]: "value"})
        return frame


def load_forecast(path: Union[str, Path], model_id: Optional[str] = None) -> ForecastSeries:
    """Read a forecast CSV written by `ForecastSeries.to_frame` (a lone `value` column is the close)."""
    csv_path = Path(path)
    if not csv_path.exists():
        raise FileNotFoundError(f"Forecast file not found: {csv_path}")
    frame = pd.read_csv(csv_path, dtype={"date": str})
    if "date" not in frame.columns:
        raise FormatError(f"{csv_path}: missing date column")
    frame = frame.rename(columns={"value": "close"})
    components = [name for name in COMPONENTS if name in frame.columns]
    try:
        dates = [dt.date.fromisoformat(text) for text in frame["date"]]
    except ValueError as exc:
        raise FormatError(f"{csv_path}: {exc}") from exc
    return ForecastSeries(
        model_id or csv_path.stem,
        dates,
        {name: frame[name].to_numpy(dtype=float) for name in components},
        mode="loaded",
    )
