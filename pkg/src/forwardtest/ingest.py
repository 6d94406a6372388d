"""OHLC bars and series: CSV codec, min-max scaling, train/test split, remote fetch."""

import datetime as dt
import io
import logging
import math
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union
from urllib.parse import urlparse

import numpy as np
import pandas as pd
import requests

from .config import FetchSettings
from .errors import (
    ArgumentError,
    ConfigurationError,
    DegenerateError,
    EmptyPartitionError,
    FormatError,
    InvariantViolation,
    RowError,
    SizeError,
    TransportError,
)
from .utils import validate_dates, validate_vector

logger = logging.getLogger(__name__)

COMPONENTS = ("open", "high", "low", "close")
CSV_HEADER = ("Date", "Open", "High", "Low", "Close", "Adj Close", "Volume")
_REQUIRED_COLUMNS = ("Date", "Open", "High", "Low", "Close", "Volume")
_PRICE_COLUMNS = (("open", "Open"), ("high", "High"), ("low", "Low"), ("close", "Close"))


@dataclass(frozen=True)
class OhlcBar:
    """One trading day. Close (not Adj Close) is the working close price."""
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: int = 0
    adj_close: Optional[float] = None

    def violations(self) -> List[str]:
        """Return the broken OHLC invariants, empty when the bar is coherent."""
        problems = []
        if not self.low > 0:
            problems.append(f"low {self.low} must be positive")
        if self.low > self.high:
            problems.append(f"low {self.low} above high {self.high}")
        if not self.low <= self.open <= self.high:
            problems.append(f"open {self.open} outside [{self.low}, {self.high}]")
        if not self.low <= self.close <= self.high:
            problems.append(f"close {self.close} outside [{self.low}, {self.high}]")
        if self.volume < 0:
            problems.append(f"volume {self.volume} is negative")
        return problems


@dataclass(frozen=True)
class RejectedRow:
    """A CSV row skipped in permissive mode."""
    line: int
    reason: str


@dataclass(frozen=True)
class PriceSeries:
    """Dated bars of one ticker, strictly increasing in date.

    Bar coherence is enforced at parse time, not here, so forecast paths
    that break high >= low can still be represented and reported.
    """
    ticker: str
    bars: Tuple[OhlcBar, ...]
    rejected: Tuple[RejectedRow, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bars", tuple(self.bars))
        object.__setattr__(self, "rejected", tuple(self.rejected))
        if self.bars:
            try:
                validate_dates([bar.date for bar in self.bars])
            except ValueError as exc:
                raise FormatError(f"{self.ticker or 'series'}: {exc}") from exc

    def __len__(self) -> int:
        return len(self.bars)

    def __iter__(self) -> Iterator[OhlcBar]:
        return iter(self.bars)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return PriceSeries(self.ticker, self.bars[index])
        return self.bars[index]

    @property
    def dates(self) -> List[dt.date]:
        return [bar.date for bar in self.bars]

    def component(self, name: str) -> np.ndarray:
        """Column vector for 'open', 'high', 'low', 'close' or 'volume'."""
        if name not in COMPONENTS + ("volume",):
            raise ArgumentError(f"unknown OHLC component {name!r}")
        return np.array([getattr(bar, name) for bar in self.bars], dtype=float)

    @property
    def opens(self) -> np.ndarray:
        return self.component("open")

    @property
    def highs(self) -> np.ndarray:
        return self.component("high")

    @property
    def lows(self) -> np.ndarray:
        return self.component("low")

    @property
    def closes(self) -> np.ndarray:
        return self.component("close")

    def concat(self, other: "PriceSeries") -> "PriceSeries":
        return PriceSeries(self.ticker or other.ticker, self.bars + other.bars)

    def to_frame(self) -> pd.DataFrame:
        """Numeric DataFrame indexed by date, lower-case OHLCV columns."""
        frame = pd.DataFrame(
            {name: self.component(name) for name in COMPONENTS + ("volume",)},
            index=pd.DatetimeIndex(pd.to_datetime(self.dates), name="date"),
        )
        return frame


@dataclass(frozen=True)
class MinMaxScaler:
    """Affine map of [min, max] onto [0, 1]."""
    min: float
    max: float

    def __post_init__(self):
        if not self.max > self.min:
            raise DegenerateError(f"min-max scale needs max > min, got [{self.min}, {self.max}]")

    @classmethod
    def fit(cls, values) -> "MinMaxScaler":
        arr = validate_vector(values, min_length=1, name="scaler input")
        lo, hi = float(np.min(arr)), float(np.max(arr))
        if not hi > lo:
            raise DegenerateError("cannot min-max scale a constant vector")
        return cls(lo, hi)

    @property
    def span(self) -> float:
        return self.max - self.min

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.min) / self.span

    def inverse_transform(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.span + self.min

    def to_dict(self) -> Dict[str, float]:
        return {"min": self.min, "max": self.max}


def minmax_normalize(values) -> Tuple[np.ndarray, MinMaxScaler]:
    """Scale `values` into [0, 1]; the returned scaler inverts the map."""
    arr = validate_vector(values, min_length=2, name="values")
    scaler = MinMaxScaler.fit(arr)
    return scaler.transform(arr), scaler


def _parse_volume(text: str) -> int:
    text = text.strip()
    if not text:
        return 0
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"volume {text!r} is not an integer")
        return int(value)


def _parse_row(record: Dict[str, str], line: int) -> OhlcBar:
    try:
        date = dt.date.fromisoformat(record["Date"].strip())
        prices = {name: float(record[column]) for name, column in _PRICE_COLUMNS}
        adj_text = (record.get("Adj Close") or "").strip()
        adj_close = float(adj_text) if adj_text else None
        volume = _parse_volume(record["Volume"])
    except (ValueError, TypeError, AttributeError) as exc:
        raise RowError(line, f"unparsable row: {exc}") from exc

    if not all(math.isfinite(v) for v in prices.values()):
        raise RowError(line, "non-finite price")

    bar = OhlcBar(date=date, volume=volume, adj_close=adj_close, **prices)
    problems = bar.violations()
    if problems:
        raise InvariantViolation(line, "; ".join(problems))
    return bar


def _split_rows(text: str, strict: bool, rejected: List[RejectedRow]) -> Tuple[str, List[int]]:
    """Drop rows whose field count differs from the header's; returns the kept text and their line numbers."""
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise FormatError("unreadable CSV: no header row")
    columns = [c.strip() for c in lines[0].split(",")]
    missing = [c for c in _REQUIRED_COLUMNS if c not in columns]
    if missing:
        raise FormatError(f"header is missing columns {missing}; expected {','.join(CSV_HEADER)}")

    kept, numbers = [lines[0]], []
    for number, row in enumerate(lines[1:], start=2):
        if not row.strip():
            continue
        fields = row.count(",") + 1
        if fields != len(columns):
            exc = RowError(number, f"expected {len(columns)} fields, got {fields}")
            if strict:
                raise exc
            logger.warning(f"Skipping {exc}")
            rejected.append(RejectedRow(exc.line, str(exc)))
            continue
        kept.append(row)
        numbers.append(number)
    return "\n".join(kept) + "\n", numbers


def parse_ohlc_csv(text: str, ticker: str = "", strict: bool = True) -> PriceSeries:
    """Parse a Yahoo-Finance style OHLC CSV.

    Strict mode raises on the first bad row. Permissive mode skips bad rows
    and keeps them, with their line numbers, in `PriceSeries.rejected`.
    """
    rejected: List[RejectedRow] = []
    body, line_numbers = _split_rows(text, strict, rejected)
    try:
        frame = pd.read_csv(io.StringIO(body), dtype=str, keep_default_na=False)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise FormatError(f"unreadable CSV: {exc}") from exc
    frame.columns = [str(c).strip() for c in frame.columns]

    parsed: List[Tuple[int, OhlcBar]] = []
    for line, record in zip(line_numbers, frame.to_dict("records")):
        if all(pd.isna(v) or not str(v).strip() for v in record.values()):
            continue
        try:
            parsed.append((line, _parse_row(record, line)))
        except RowError as exc:
            if strict:
                raise
            logger.warning(f"Skipping {exc}")
            rejected.append(RejectedRow(exc.line, str(exc)))

    parsed.sort(key=lambda item: item[1].date)
    bars: List[OhlcBar] = []
    for line, bar in parsed:
        if bars and bars[-1].date == bar.date:
            if strict:
                raise RowError(line, f"duplicate date {bar.date}")
            logger.warning(f"Skipping line {line}: duplicate date {bar.date}")
            rejected.append(RejectedRow(line, f"duplicate date {bar.date}"))
            continue
        bars.append(bar)

    logger.info(f"Parsed {len(bars)} bars for {ticker or 'series'} ({len(rejected)} rejected)")
    return PriceSeries(ticker, tuple(bars), tuple(sorted(rejected, key=lambda r: r.line)))


def serialize_ohlc_csv(series: PriceSeries) -> str:
    """Write the canonical CSV; parse_ohlc_csv reads it back bit-exactly."""
    rows = {
        "Date": [bar.date.isoformat() for bar in series],
        "Open": [repr(float(bar.open)) for bar in series],
        "High": [repr(float(bar.high)) for bar in series],
        "Low": [repr(float(bar.low)) for bar in series],
        "Close": [repr(float(bar.close)) for bar in series],
        "Adj Close": ["" if bar.adj_close is None else repr(float(bar.adj_close)) for bar in series],
        "Volume": [str(int(bar.volume)) for bar in series],
    }
    frame = pd.DataFrame(rows, columns=list(CSV_HEADER))
    return frame.to_csv(index=False, lineterminator="\n")


def load_series(path: Union[str, Path], ticker: Optional[str] = None, strict: bool = True) -> PriceSeries:
    """Read and parse a CSV file; the ticker defaults to the upper-cased file stem."""
    csv_path = Path(path)
    if not csv_path.exists():
        raise FileNotFoundError(f"CSV file not found: {csv_path}")
    name = ticker or csv_path.name.split(".")[0].upper()
    return parse_ohlc_csv(csv_path.read_text(encoding="utf-8"), ticker=name, strict=strict)


def split_train_test(series: PriceSeries, train_end: dt.date) -> Tuple[PriceSeries, PriceSeries]:
    """Partition into bars dated <= train_end and bars dated after it."""
    if not len(series):
        raise EmptyPartitionError("cannot split an empty series")
    cut = bisect_right(series.dates, train_end)
    if cut == 0:
        raise EmptyPartitionError(f"train_end {train_end} precedes the first bar {series.bars[0].date}")
    if cut == len(series):
        raise EmptyPartitionError(f"train_end {train_end} leaves no test bars after {series.bars[-1].date}")
    return series[:cut], series[cut:]


def fetch_remote_csv(url: str, settings: FetchSettings) -> str:
    """Download a CSV body verbatim, streamed in chunks."""
    if not settings.allow_network:
        raise ConfigurationError("network access is disabled ([fetch] allow_network = false)")

    scheme = urlparse(url).scheme
    if scheme not in ("http", "https"):
        raise ArgumentError(f"unsupported URL scheme {scheme!r}")
    if settings.require_https and scheme != "https":
        raise ArgumentError(f"HTTPS required, got {url}")

    try:
        with requests.get(url, stream=True, timeout=settings.timeout) as response:
            if not 200 <= response.status_code < 300:
                raise TransportError(f"GET {url} returned HTTP {response.status_code}")
            chunks, size = [], 0
            for chunk in response.iter_content(chunk_size=settings.chunk_size):
                size += len(chunk)
                if size > settings.max_bytes:
                    raise SizeError(f"body of {url} exceeds {settings.max_bytes} bytes")
                chunks.append(chunk)
    except requests.RequestException as exc:
        raise TransportError(f"GET {url} failed: {exc}") from exc

    body = b"".join(chunks)
    logger.info(f"Fetched {len(body)} bytes from {url}")
    try:
        return body.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"body of {url} is not UTF-8") from exc


def bars_from_arrays(
    ticker: str,
    dates: Sequence[dt.date],
    opens: Sequence[float],
    highs: Sequence[float],
    lows: Sequence[float],
    closes: Sequence[float],
) -> PriceSeries:
    """Assemble a series from parallel arrays (volume 0), without coherence checks."""
    bars = tuple(
        OhlcBar(date=d, open=float(o), high=float(h), low=float(l), close=float(c))
        for d, o, h, l, c in zip(dates, opens, highs, lows, closes)
    )
    return PriceSeries(ticker, bars)
