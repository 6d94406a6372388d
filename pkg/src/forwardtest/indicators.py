"""Technical indicators and the entry/exit rules built on them.

Conventions: EMA alpha = 2 / (n + 1), seeded with the SMA of the first n
values; RSI, ATR and ADX use Wilder smoothing; Bollinger bands use the
population standard deviation. Undefined positions are NaN.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import ArgumentError, ShapeError, SizeError
from .ingest import COMPONENTS, PriceSeries

logger = logging.getLogger(__name__)

DEFAULT_PARAMS: Dict[str, Dict[str, float]] = {
    "SMA": {"period": 20},
    "EMA": {"period": 20},
    "MACD": {"fast": 12, "slow": 26, "signal": 9},
    "BB": {"period": 20, "width": 2.0},
    "STOCH": {"period": 14, "smooth": 3, "oversold": 20, "overbought": 80},
    "WILLR": {"period": 14, "oversold": -80, "overbought": -20},
    "MOM": {"period": 10},
    "RSI": {"period": 14, "oversold": 30, "overbought": 70},
    "ATR": {"period": 14, "multiplier": 1.0},
    "PO": {"fast": 12, "slow": 26},
    "TEMA": {"period": 9},
    "ADX": {"period": 14, "threshold": 25},
}

COMBOS: Dict[str, Tuple[str, ...]] = {
    "ST+MO+MACD": ("STOCH", "MOM", "MACD"),
    "PO+WILLR": ("PO", "WILLR"),
    "PO+RSI": ("PO", "RSI"),
}

# kinds whose rule fires on the bar a condition becomes true
_EDGE_KINDS = {"SMA", "EMA", "MACD", "BB", "STOCH", "WILLR", "MOM", "RSI", "ATR", "PO"}


class Action(str, Enum):
    ENTER = "ENTER"
    EXIT = "EXIT"
    HOLD = "HOLD"


@dataclass(frozen=True)
class IndicatorSpec:
    """An indicator kind or combo plus parameter overrides.

    Combo members are configured with dotted keys, e.g. {"RSI.period": 5}.
    """
    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", dict(self.params))
        if kind not in DEFAULT_PARAMS and kind not in COMBOS:
            raise ArgumentError(f"unknown indicator {self.kind!r}")
        for member in self.members:
            resolved = self.member_params(member)
            for key, value in resolved.items():
                if key in ("oversold", "overbought"):
                    continue
                if not value > 0:
                    raise ArgumentError(f"{member} parameter {key} must be positive, got {value}")
            if "oversold" in resolved:
                low, high = (0, 100) if member != "WILLR" else (-100, 0)
                if not low <= resolved["oversold"] < resolved["overbought"] <= high:
                    raise ArgumentError(f"{member} thresholds must satisfy {low} <= oversold < overbought <= {high}")
            if member == "MACD" or member == "PO":
                if resolved["fast"] >= resolved["slow"]:
                    raise ArgumentError(f"{member} fast period must be shorter than slow")

    @property
    def is_combo(self) -> bool:
        return self.kind in COMBOS

    @property
    def members(self) -> Tuple[str, ...]:
        return COMBOS[self.kind] if self.is_combo else (self.kind,)

    def member_params(self, member: str) -> Dict[str, float]:
        resolved = dict(DEFAULT_PARAMS[member])
        for key, value in self.params.items():
            prefix, _, name = key.rpartition(".")
            if (prefix == member) or (not prefix and not self.is_combo):
                if name not in resolved:
                    raise ArgumentError(f"{member} has no parameter {name!r}")
                resolved[name] = value
        return resolved

    @property
    def name(self) -> str:
        if self.is_combo and not self.params:
            return self.kind
        if self.is_combo:
            return f"{self.kind}({','.join(f'{k}={v:g}' for k, v in sorted(self.params.items()))})"
        resolved = self.member_params(self.kind)
        return f"{self.kind}({','.join(f'{v:g}' for v in resolved.values())})"

    def to_dict(self) -> Dict[str, object]:
        return {
            "kind": self.kind,
            "name": self.name,
            "params": {member: self.member_params(member) for member in self.members},
        }


DEFAULT_CANDIDATES: Tuple[IndicatorSpec, ...] = tuple(
    [IndicatorSpec(kind) for kind in DEFAULT_PARAMS if kind != "RSI"]
    + [IndicatorSpec("RSI", {"period": 5, "overbought": 70, "oversold": 30})]
    + [IndicatorSpec(combo) for combo in COMBOS]
)


def parse_spec(text: str) -> IndicatorSpec:
    """`KIND` or `KIND:key=value,...`, e.g. `RSI:period=5,oversold=30` or `PO+RSI:RSI.period=5`."""
    kind, _, rest = text.strip().partition(":")
    params: Dict[str, float] = {}
    for item in (part.strip() for part in rest.split(",")):
        if not item:
            continue
        key, sep, raw = item.partition("=")
        if not sep:
            raise ArgumentError(f"expected key=value in {text!r}, got {item!r}")
        try:
            value = float(raw)
        except ValueError as exc:
            raise ArgumentError(f"{key.strip()}: not a number: {raw!r}") from exc
        params[key.strip()] = int(value) if value.is_integer() else value
    return IndicatorSpec(kind, params)


@dataclass(frozen=True)
class SignalSeries:
    dates: Tuple
    actions: Tuple[Action, ...]
    spec_name: str = ""

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, index):
        return self.actions[index]

    def count(self, action: Action) -> int:
        return sum(1 for a in self.actions if a is action)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"date": [d.isoformat() for d in self.dates], "action": [a.value for a in self.actions]})


# -- moving averages and smoothers -------------------------------------------

def _first_finite(values: np.ndarray) -> int:
    finite = np.flatnonzero(np.isfinite(values))
    return int(finite[0]) if len(finite) else len(values)


def sma(values, period: int) -> np.ndarray:
    return pd.Series(np.asarray(values, dtype=float)).rolling(int(period)).mean().to_numpy()


def ema(values, period: int) -> np.ndarray:
    """EMA seeded by the SMA of the first `period` defined values."""
    values = np.asarray(values, dtype=float)
    period = int(period)
    out = np.full(len(values), np.nan)
    first = _first_finite(values)
    seed_at = first + period - 1
    if seed_at >= len(values):
        return out
    alpha = 2.0 / (period + 1.0)
    out[seed_at] = values[first:seed_at + 1].mean()
    for t in range(seed_at + 1, len(values)):
        out[t] = alpha * values[t] + (1.0 - alpha) * out[t - 1]
    return out


def wilder(values, period: int) -> np.ndarray:
    """Wilder's running average: seeded by a plain mean, then (prev * (n - 1) + x) / n."""
    values = np.asarray(values, dtype=float)
    period = int(period)
    out = np.full(len(values), np.nan)
    first = _first_finite(values)
    seed_at = first + period - 1
    if seed_at >= len(values):
        return out
    out[seed_at] = values[first:seed_at + 1].mean()
    for t in range(seed_at + 1, len(values)):
        out[t] = (out[t - 1] * (period - 1) + values[t]) / period
    return out


def tema(values, period: int) -> np.ndarray:
    e1 = ema(values, period)
    e2 = ema(e1, period)
    e3 = ema(e2, period)
    return 3.0 * e1 - 3.0 * e2 + e3


# -- indicator kernels --------------------------------------------------------

def _true_range(high: np.ndarray, low: np.ndarray, close: np.ndarray) -> np.ndarray:
    tr = np.full(len(close), np.nan)
    prev = close[:-1]
    tr[1:] = np.maximum.reduce([high[1:] - low[1:], np.abs(high[1:] - prev), np.abs(low[1:] - prev)])
    return tr


def rsi(close, period: int = 14) -> np.ndarray:
    close = np.asarray(close, dtype=float)
    delta = np.full(len(close), np.nan)
    delta[1:] = np.diff(close)
    gain = wilder(np.where(np.isnan(delta), np.nan, np.maximum(delta, 0.0)), period)
    loss = wilder(np.where(np.isnan(delta), np.nan, np.maximum(-delta, 0.0)), period)
    out = np.full(len(close), np.nan)
    defined = np.isfinite(gain) & np.isfinite(loss)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[defined] = 100.0 - 100.0 / (1.0 + gain[defined] / loss[defined])
    out[defined & (loss == 0) & (gain > 0)] = 100.0
    out[defined & (loss == 0) & (gain == 0)] = 50.0
    return out


def stochastic(high, low, close, period: int = 14, smooth: int = 3) -> Tuple[np.ndarray, np.ndarray]:
    highest = pd.Series(high).rolling(int(period)).max().to_numpy()
    lowest = pd.Series(low).rolling(int(period)).min().to_numpy()
    span = highest - lowest
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(span > 0, 100.0 * (np.asarray(close) - lowest) / span, np.nan)
    return k, sma(k, smooth)


def williams_r(high, low, close, period: int = 14) -> np.ndarray:
    highest = pd.Series(high).rolling(int(period)).max().to_numpy()
    lowest = pd.Series(low).rolling(int(period)).min().to_numpy()
    span = highest - lowest
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(span > 0, -100.0 * (highest - np.asarray(close)) / span, np.nan)


def adx(high, low, close, period: int = 14) -> Dict[str, np.ndarray]:
    high, low, close = (np.asarray(v, dtype=float) for v in (high, low, close))
    up = np.full(len(close), np.nan)
    down = np.full(len(close), np.nan)
    up[1:] = high[1:] - high[:-1]
    down[1:] = low[:-1] - low[1:]
    plus_dm = np.where((up > down) & (up > 0), up, 0.0)
    minus_dm = np.where((down > up) & (down > 0), down, 0.0)
    plus_dm[0] = minus_dm[0] = np.nan

    atr_ = wilder(_true_range(high, low, close), period)
    with np.errstate(divide="ignore", invalid="ignore"):
        plus_di = np.where(atr_ > 0, 100.0 * wilder(plus_dm, period) / atr_, 0.0)
        minus_di = np.where(atr_ > 0, 100.0 * wilder(minus_dm, period) / atr_, 0.0)
        total = plus_di + minus_di
        dx = np.where(total > 0, 100.0 * np.abs(plus_di - minus_di) / total, 0.0)
    undefined = ~np.isfinite(atr_)
    plus_di[undefined] = minus_di[undefined] = dx[undefined] = np.nan
    return {"adx": wilder(dx, period), "plus_di": plus_di, "minus_di": minus_di}


def _kernel(kind: str, p: Dict[str, float], series: PriceSeries) -> Dict[str, np.ndarray]:
    o, h, l, c = series.opens, series.highs, series.lows, series.closes
    n = int(p.get("period", 0))
    if kind == "SMA":
        return {"value": sma(c, n)}
    if kind == "EMA":
        return {"value": ema(c, n)}
    if kind == "MACD":
        line = ema(c, p["fast"]) - ema(c, p["slow"])
        signal = ema(line, p["signal"])
        return {"macd": line, "signal": signal, "hist": line - signal}
    if kind == "BB":
        middle = sma(c, n)
        spread = pd.Series(c).rolling(n).std(ddof=0).to_numpy()
        return {"middle": middle, "upper": middle + p["width"] * spread, "lower": middle - p["width"] * spread}
    if kind == "STOCH":
        k, d = stochastic(h, l, c, n, int(p["smooth"]))
        return {"k": k, "d": d}
    if kind == "WILLR":
        return {"value": williams_r(h, l, c, n)}
    if kind == "MOM":
        mom = np.full(len(c), np.nan)
        mom[n:] = c[n:] - c[:-n]
        return {"value": mom}
    if kind == "RSI":
        return {"value": rsi(c, n)}
    if kind == "ATR":
        return {"value": wilder(_true_range(h, l, c), n)}
    if kind == "PO":
        slow = ema(c, p["slow"])
        with np.errstate(divide="ignore", invalid="ignore"):
            return {"value": 100.0 * (ema(c, p["fast"]) - slow) / slow}
    if kind == "TEMA":
        return {name: tema(values, n) for name, values in zip(COMPONENTS, (o, h, l, c))}
    if kind == "ADX":
        return adx(h, l, c, n)
    raise ArgumentError(f"unknown indicator {kind!r}")


def _member_warmup(kind: str, p: Dict[str, float]) -> int:
    n = int(p.get("period", 0))
    if kind in ("SMA", "EMA", "BB", "WILLR"):
        return n - 1
    if kind == "STOCH":
        return n - 1 + int(p["smooth"]) - 1
    if kind == "MACD":
        return int(p["slow"]) - 1 + int(p["signal"]) - 1
    if kind == "PO":
        return int(p["slow"]) - 1
    if kind in ("MOM", "RSI", "ATR"):
        return n
    if kind == "TEMA":
        return 3 * (n - 1)
    if kind == "ADX":
        return 2 * n - 1
    raise ArgumentError(f"unknown indicator {kind!r}")


def warmup_bars(spec: IndicatorSpec) -> int:
    """Index of the first bar on which every output of `spec` is defined."""
    return max(_member_warmup(member, spec.member_params(member)) for member in spec.members)


def compute_indicator(spec: IndicatorSpec, series: PriceSeries) -> Dict[str, np.ndarray]:
    """Named per-bar output vectors; combo outputs are prefixed "<MEMBER>."."""
    warmup = warmup_bars(spec)
    if len(series) <= warmup:
        raise SizeError(f"{spec.name} needs more than {warmup} bars, got {len(series)}")
    if not spec.is_combo:
        return _kernel(spec.kind, spec.member_params(spec.kind), series)
    values = {}
    for member in spec.members:
        for name, vector in _kernel(member, spec.member_params(member), series).items():
            values[f"{member}.{name}"] = vector
    return values


# -- rules ---------------------------------------------------------------------

def _states(kind: str, p: Dict[str, float], series: PriceSeries, v: Dict[str, np.ndarray], prefix: str = ""):
    """Boolean (enter, exit) condition arrays plus a defined-mask."""
    def get(name: str) -> np.ndarray:
        return np.asarray(v[prefix + name], dtype=float)

    c = series.closes
    if kind in ("SMA", "EMA"):
        x, ref = c, get("value")
        return x > ref, x < ref, np.isfinite(ref)
    if kind == "MACD":
        line, signal = get("macd"), get("signal")
        return line > signal, line < signal, np.isfinite(line) & np.isfinite(signal)
    if kind == "BB":
        lower, upper = get("lower"), get("upper")
        return c < lower, c > upper, np.isfinite(lower) & np.isfinite(upper)
    if kind == "STOCH":
        k = get("k")
        return k > p["oversold"], k < p["overbought"], np.isfinite(k) & np.isfinite(get("d"))
    if kind in ("WILLR", "RSI"):
        x = get("value")
        return x > p["oversold"], x < p["overbought"], np.isfinite(x)
    if kind in ("MOM", "PO"):
        x = get("value")
        return x > 0, x < 0, np.isfinite(x)
    if kind == "ATR":
        atr_prev = np.full(len(c), np.nan)
        atr_prev[1:] = get("value")[:-1]
        move = np.full(len(c), np.nan)
        move[1:] = np.diff(c)
        band = p["multiplier"] * atr_prev
        return move > band, move < -band, np.isfinite(band) & np.isfinite(move)
    if kind == "TEMA":
        o, h, l = series.opens, series.highs, series.lows
        t = {name: get(name) for name in COMPONENTS}
        enter = ((l < t["low"]) | (h < t["high"])) & ((c < t["close"]) | (o < t["open"]))
        exit_ = ((l > t["low"]) | (h > t["high"])) & ((c > t["close"]) | (o > t["open"]))
        defined = np.logical_and.reduce([np.isfinite(t[name]) for name in COMPONENTS])
        return enter, exit_, defined
    if kind == "ADX":
        strength, plus, minus = get("adx"), get("plus_di"), get("minus_di")
        strong = strength > p["threshold"]
        defined = np.isfinite(strength) & np.isfinite(plus) & np.isfinite(minus)
        return (plus > minus) & strong, (minus > plus) & strong, defined
    raise ArgumentError(f"unknown indicator {kind!r}")


def _rising_edge(state: np.ndarray, defined: np.ndarray) -> np.ndarray:
    edge = np.zeros(len(state), dtype=bool)
    edge[1:] = state[1:] & ~state[:-1] & defined[1:] & defined[:-1]
    return edge


def generate_signals(
    spec: IndicatorSpec,
    series: PriceSeries,
    values: Optional[Mapping[str, np.ndarray]] = None,
) -> SignalSeries:
    """Per-bar ENTER / EXIT / HOLD.

    Crossing rules (and every combo) act on the bar their condition turns
    true; TEMA and ADX act on every bar their condition holds. Undefined
    indicators and bars where entry and exit both fire give HOLD.
    """
    values = compute_indicator(spec, series) if values is None else dict(values)
    for name, vector in values.items():
        if len(vector) != len(series):
            raise ShapeError(f"indicator output {name!r} has {len(vector)} values for {len(series)} bars")

    parts = [
        _states(m, spec.member_params(m), series, values, f"{m}." if spec.is_combo else "")
        for m in spec.members
    ]
    defined = np.logical_and.reduce([part[2] for part in parts])
    enter_state = np.logical_and.reduce([part[0] for part in parts]) & defined
    exit_state = np.logical_and.reduce([part[1] for part in parts]) & defined

    if spec.is_combo or spec.kind in _EDGE_KINDS:
        enter = _rising_edge(enter_state, defined)
        exit_ = _rising_edge(exit_state, defined)
    else:
        enter, exit_ = enter_state, exit_state

    actions = tuple(
        Action.ENTER if e and not x else Action.EXIT if x and not e else Action.HOLD
        for e, x in zip(enter, exit_)
    )
    signals = SignalSeries(tuple(series.dates), actions, spec.name)
    logger.debug(f"{spec.name}: {signals.count(Action.ENTER)} entries, {signals.count(Action.EXIT)} exits")
    return signals


def indicator_frame(spec: IndicatorSpec, series: PriceSeries) -> pd.DataFrame:
    """Indicator outputs as CSV-ready columns next to the bar dates."""
    values = compute_indicator(spec, series)
    frame = pd.DataFrame(values)
    frame.insert(0, "date", [d.isoformat() for d in series.dates])
    return frame
