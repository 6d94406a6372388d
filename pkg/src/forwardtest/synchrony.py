"""Pearson correlation (global and rolling) and dynamic time warping between two series."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ArgumentError, DegenerateError, ShapeError, SizeError
from .utils import validate_vector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DtwResult:
    cost: float
    path: Tuple[Tuple[int, int], ...]

    def to_dict(self):
        return {"cost": self.cost, "path": [list(pair) for pair in self.path]}


def _pair(x, y, min_length: int) -> Tuple[np.ndarray, np.ndarray]:
    x = validate_vector(x, min_length=min_length, name="x")
    y = validate_vector(y, min_length=min_length, name="y")
    if x.shape != y.shape:
        raise ShapeError(f"lengths differ: {len(x)} vs {len(y)}")
    return x, y


def pearson(x, y) -> float:
    """Sample correlation coefficient, clipped to [-1, 1]."""
    x, y = _pair(x, y, 2)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DegenerateError("pearson is undefined for a constant input")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def rolling_pearson(x, y, window: int = 120) -> np.ndarray:
    """pearson over every window position; NaN where a slice is constant."""
    if window < 2:
        raise ArgumentError(f"window must be >= 2, got {window}")
    x, y = _pair(x, y, 1)
    if len(x) < window:
        raise SizeError(f"window {window} exceeds series length {len(x)}")
    out = np.empty(len(x) - window + 1)
    for start in range(len(out)):
        try:
            out[start] = pearson(x[start:start + window], y[start:start + window])
        except DegenerateError:
            out[start] = np.nan
    undefined = int(np.isnan(out).sum())
    if undefined:
        logger.warning(f"{undefined} of {len(out)} windows are constant; flagged as NaN")
    return out


def _accumulated_cost(x: np.ndarray, y: np.ndarray, band: Optional[int]) -> np.ndarray:
    """(len(x)+1) x (len(y)+1) table; row 0 and column 0 are the inf border."""
    r, c = len(x), len(y)
    D = np.full((r + 1, c + 1), np.inf)
    D[0, 0] = 0.0
    for i in range(1, r + 1):
        lo, hi = 1, c
        if band is not None:
            lo, hi = max(1, i - band), min(c, i + band)
            if lo > hi:
                continue
        cost = np.abs(x[i - 1] - y[lo - 1:hi])
        # D[i, j] = cost[j] + min(D[i-1, j-1], D[i-1, j], D[i, j-1]); the left term is a
        # running min-plus scan: D[i, j] = S[j] + min_{m <= j} (reach[m] - S[m-1])
        reach = cost + np.minimum(D[i - 1, lo - 1:hi], D[i - 1, lo:hi + 1])
        prefix = np.concatenate(([0.0], np.cumsum(cost)))
        D[i, lo:hi + 1] = prefix[1:] + np.minimum.accumulate(reach - prefix[1:])
    return D


def _traceback(D: np.ndarray) -> List[Tuple[int, int]]:
    i, j = D.shape[0] - 1, D.shape[1] - 1
    path = [(i - 1, j - 1)]
    while i > 1 or j > 1:
        # diagonal first on ties
        step = int(np.argmin((D[i - 1, j - 1], D[i - 1, j], D[i, j - 1])))
        if step == 0:
            i, j = i - 1, j - 1
        elif step == 1:
            i -= 1
        else:
            j -= 1
        path.append((i - 1, j - 1))
    path.reverse()
    return path


def dtw_distance(x, y, band: Optional[int] = None) -> DtwResult:
    """Unconstrained DTW with |x_i - y_j| local cost, or Sakoe-Chiba banded when `band` is set."""
    x = validate_vector(x, min_length=1, name="x") if len(x) else None
    y = validate_vector(y, min_length=1, name="y") if len(y) else None
    if x is None or y is None:
        raise ArgumentError("dtw needs two non-empty series")
    if band is not None:
        if band < 0:
            raise ArgumentError(f"band must be >= 0, got {band}")
        band = max(band, abs(len(x) - len(y)))

    D = _accumulated_cost(x, y, band)
    path = _traceback(D)
    cost = float(sum(abs(x[i] - y[j]) for i, j in path))
    logger.debug(f"dtw {len(x)}x{len(y)}: cost {cost:.6f}, path length {len(path)}")
    return DtwResult(cost, tuple(path))
