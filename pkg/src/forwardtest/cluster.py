"""k-means++ clustering of standardized volatility features and elbow selection of k."""

import datetime as dt
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ArgumentError, DegenerateError, NumericalError, ShapeError, SizeError
from .ingest import PriceSeries
from .returns_vol import VolatilityKind, volatility

logger = logging.getLogger(__name__)

FEATURE_COLUMNS = ("PK", "GK", "RS", "YZ")
MAX_ITER = 300


@dataclass(frozen=True)
class VolatilityFeatureMatrix:
    """Per-day rows of PK/GK/RS/YZ values, labelled by (ticker, date)."""
    values: np.ndarray
    labels: Tuple[Tuple[str, dt.date], ...]
    columns: Tuple[str, ...] = FEATURE_COLUMNS

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(FEATURE_COLUMNS):
            raise ShapeError(f"feature matrix must be n x {len(FEATURE_COLUMNS)}, got {values.shape}")
        if len(self.labels) != values.shape[0]:
            raise ShapeError(f"{len(self.labels)} labels for {values.shape[0]} rows")
        if not np.all(np.isfinite(values)):
            raise ArgumentError("feature matrix has missing cells")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def tickers(self) -> List[str]:
        return sorted({ticker for ticker, _ in self.labels})

    def with_values(self, values: np.ndarray) -> "VolatilityFeatureMatrix":
        return VolatilityFeatureMatrix(values, self.labels, self.columns)


@dataclass(frozen=True)
class Clustering:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    wss: float
    iterations: int = 0
    seed: Optional[int] = None

    def sizes(self) -> List[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()


@dataclass(frozen=True)
class ElbowScan:
    k_values: Tuple[int, ...]
    wss: Tuple[float, ...]
    knee: int
    kneedle_knee: int
    chord_distance: Tuple[float, ...]
    clusterings: Dict[int, Clustering] = field(default_factory=dict, repr=False)

    def to_dict(self) -> Dict[str, object]:
        return {
            "k_values": list(self.k_values),
            "wss": list(self.wss),
            "knee": self.knee,
            "kneedle_knee": self.kneedle_knee,
            "chord_distance": list(self.chord_distance),
        }


def volatility_feature_matrix(series_list: Sequence[PriceSeries], window: int = 30) -> VolatilityFeatureMatrix:
    """Pool the per-day PK/GK/RS/YZ rows of every ticker, on the dates all four define."""
    blocks, labels = [], []
    for series in series_list:
        rolling = [volatility(series, VolatilityKind(kind), window)[0] for kind in FEATURE_COLUMNS]
        frame = pd.concat(rolling, axis=1, join="inner")
        frame.columns = list(FEATURE_COLUMNS)
        blocks.append(frame.to_numpy())
        labels.extend((series.ticker, ts.date()) for ts in frame.index)
        logger.info(f"{series.ticker}: {len(frame)} feature rows")
    if not blocks:
        raise ArgumentError("no series given")
    return VolatilityFeatureMatrix(np.vstack(blocks), tuple(labels))


def zscore_standardize(matrix):
    """Column-wise (x - mean) / std with the population std.

    Accepts a raw 2-D array or a VolatilityFeatureMatrix and returns the same kind.
    """
    raw = matrix.values if isinstance(matrix, VolatilityFeatureMatrix) else np.asarray(matrix, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise SizeError(f"standardization needs at least 2 rows, got shape {raw.shape}")
    std = raw.std(axis=0)
    if np.any(std == 0):
        raise DegenerateError(f"zero-variance column(s) {np.flatnonzero(std == 0).tolist()}")
    scaled = (raw - raw.mean(axis=0)) / std
    if isinstance(matrix, VolatilityFeatureMatrix):
        return matrix.with_values(scaled)
    return scaled


def _as_points(points) -> np.ndarray:
    arr = points.values if isinstance(points, VolatilityFeatureMatrix) else np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ArgumentError(f"points must be a non-empty 2-D array, got shape {arr.shape}")
    return arr


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    nearest = _squared_distances(points, points[chosen]).min(axis=1)
    while len(chosen) < k:
        total = nearest.sum()
        if total > 0:
            index = int(rng.choice(n, p=nearest / total))
        else:
            # all remaining points coincide with a centre
            remaining = np.setdiff1d(np.arange(n), chosen)
            index = int(rng.choice(remaining))
        chosen.append(index)
        nearest = np.minimum(nearest, _squared_distances(points, points[[index]])[:, 0])
    return points[chosen].copy()


def _wss(points: np.ndarray, centroids: np.ndarray, assignments: np.ndarray) -> float:
    diff = points - centroids[assignments]
    return float(np.einsum("ij,ij->", diff, diff))


def lloyd(points, centroids: np.ndarray, max_iter: int = MAX_ITER) -> Tuple[np.ndarray, np.ndarray, float, int]:
    """Lloyd iterations from `centroids` until the assignment is a fixpoint.

    Returns (centroids, assignments, wss, iterations). An emptied cluster is
    moved onto the point currently farthest from its own centroid.
    """
    points = _as_points(points)
    centroids = np.array(centroids, dtype=float, copy=True)
    k = centroids.shape[0]
    assignments = _squared_distances(points, centroids).argmin(axis=1)
    wss = _wss(points, centroids, assignments)

    iterations = 0
    for iterations in range(1, max_iter + 1):
        for j in range(k):
            members = points[assignments == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                residual = points - centroids[assignments]
                far = int(np.argmax(np.einsum("ij,ij->i", residual, residual)))
                centroids[j] = points[far]
                assignments[far] = j
        new_assignments = _squared_distances(points, centroids).argmin(axis=1)
        new_wss = _wss(points, centroids, new_assignments)
        if new_wss > wss * (1 + 1e-12) + 1e-12:
            raise NumericalError(f"Lloyd step increased wss from {wss} to {new_wss}")
        logger.debug(f"k={k} iteration {iterations}: wss {new_wss:.6f}")
        wss = new_wss
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments

    # centroids are the exact member means of the final assignment
    for j in range(k):
        members = points[assignments == j]
        if len(members):
            centroids[j] = members.mean(axis=0)
    return centroids, assignments, _wss(points, centroids, assignments), iterations


def kmeans_pp(points, k: int, seed: int = 0, max_iter: int = MAX_ITER) -> Clustering:
    """One seeded k-means++ initialization followed by Lloyd iterations."""
    arr = _as_points(points)
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    if k > arr.shape[0]:
        raise SizeError(f"k = {k} exceeds the {arr.shape[0]} points")
    rng = np.random.default_rng(seed)
    centroids, assignments, wss, iterations = lloyd(arr, _kmeans_pp_init(arr, k, rng), max_iter)
    return Clustering(k, centroids, assignments, wss, iterations, seed)


def kmeans_best_of(points, k: int, seed: int = 0, restarts: int = 10, max_iter: int = MAX_ITER) -> Clustering:
    """Lowest-wss clustering over `restarts` seeds derived from `seed`."""
    if restarts < 1:
        raise ArgumentError(f"restarts must be >= 1, got {restarts}")
    seeds = np.random.SeedSequence(seed).generate_state(restarts)
    best = None
    for run_seed in seeds:
        candidate = kmeans_pp(points, k, int(run_seed), max_iter)
        if best is None or candidate.wss < best.wss:
            best = candidate
    return best


def canonical_relabel(assignments) -> np.ndarray:
    """Renumber cluster ids in order of first appearance."""
    mapping: Dict[int, int] = {}
    out = np.empty(len(assignments), dtype=int)
    for i, label in enumerate(np.asarray(assignments)):
        out[i] = mapping.setdefault(int(label), len(mapping))
    return out


def _knee_by_second_difference(k_values: Sequence[int], wss: Sequence[float]) -> int:
    if len(k_values) < 3:
        return int(k_values[0])
    w = np.asarray(wss, dtype=float)
    curvature = w[:-2] - 2.0 * w[1:-1] + w[2:]
    return int(k_values[1 + int(np.argmax(curvature))])


def _chord_distance(k_values: Sequence[int], wss: Sequence[float]) -> np.ndarray:
    x = np.asarray(k_values, dtype=float)
    y = np.asarray(wss, dtype=float)
    if len(x) < 2 or y[0] == y[-1]:
        return np.zeros(len(x))
    xn = (x - x[0]) / (x[-1] - x[0])
    yn = (y - y[-1]) / (y[0] - y[-1])
    return (1.0 - xn) - yn


def elbow_scan(
    points,
    k_range: Sequence[int] = range(2, 21),
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = MAX_ITER,
) -> ElbowScan:
    """wss for each k and the knee of the curve.

    Each k keeps the best of `restarts` k-means++ runs and of one warm start
    from the previous k's centroids plus the worst-fitted point, so the
    curve never increases.
    """
    arr = _as_points(points)
    k_values = sorted(int(k) for k in k_range)
    if not k_values:
        raise ArgumentError("empty k range")
    if k_values[0] < 1 or k_values[-1] > arr.shape[0]:
        raise SizeError(f"k range {k_values[0]}..{k_values[-1]} outside [1, {arr.shape[0]}]")

    clusterings: Dict[int, Clustering] = {}
    previous: Optional[Clustering] = None
    for k in k_values:
        best = kmeans_best_of(arr, k, seed + k, restarts, max_iter)
        if previous is not None and previous.k < k:
            warm = previous.centroids
            while warm.shape[0] < k:
                residual = _squared_distances(arr, warm).min(axis=1)
                warm = np.vstack([warm, arr[int(np.argmax(residual))]])
            centroids, assignments, wss, iterations = lloyd(arr, warm, max_iter)
            if wss < best.wss:
                best = Clustering(k, centroids, assignments, wss, iterations, None)
        if previous is not None and best.wss > previous.wss * (1 + 1e-12) + 1e-12:
            raise NumericalError(f"wss rose from {previous.wss} at k={previous.k} to {best.wss} at k={k}")
        clusterings[k] = best
        previous = best
        logger.info(f"k={k}: wss {best.wss:.6f}")

    wss = [clusterings[k].wss for k in k_values]
    distance = _chord_distance(k_values, wss)
    return ElbowScan(
        k_values=tuple(k_values),
        wss=tuple(wss),
        knee=_knee_by_second_difference(k_values, wss),
        kneedle_knee=int(k_values[int(np.argmax(distance))]),
        chord_distance=tuple(float(d) for d in distance),
        clusterings=clusterings,
    )


def cluster_report(matrix: VolatilityFeatureMatrix, clustering: Clustering) -> Dict[str, object]:
    """Spread of each ticker's rows over the clusters."""
    if len(matrix) != len(clustering.assignments):
        raise ShapeError(f"{len(clustering.assignments)} assignments for {len(matrix)} rows")
    tickers = {}
    for ticker in matrix.tickers:
        mask = np.array([label[0] == ticker for label in matrix.labels])
        counts = np.bincount(clustering.assignments[mask], minlength=clustering.k).tolist()
        tickers[ticker] = {
            "rows": int(mask.sum()),
            "counts": counts,
            "covers_all_clusters": all(count > 0 for count in counts),
        }
    return {
        "k": clustering.k,
        "wss": clustering.wss,
        "sizes": clustering.sizes(),
        "tickers": tickers,
        "assignments": [
            {"ticker": ticker, "date": date.isoformat(), "cluster": int(cluster)}
            for (ticker, date), cluster in zip(matrix.labels, clustering.assignments)
        ],
    }
