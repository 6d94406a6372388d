import functools
import itertools

import numpy as np
import pytest

from src.forwardtest.errors import ArgumentError, DegenerateError, ShapeError, SizeError
from src.forwardtest.ingest import load_series, minmax_normalize
from src.forwardtest.synchrony import dtw_distance, pearson, rolling_pearson
from tests.helpers import published_csv, random_walk


def exhaustive_dtw(x, y):
    """Minimum over every monotone contiguous path, by plain recursion."""
    @functools.lru_cache(maxsize=None)
    def best(i, j):
        here = abs(x[i] - y[j])
        if i == 0 and j == 0:
            return here
        steps = []
        if i > 0:
            steps.append(best(i - 1, j))
        if j > 0:
            steps.append(best(i, j - 1))
        if i > 0 and j > 0:
            steps.append(best(i - 1, j - 1))
        return here + min(steps)

    return best(len(x) - 1, len(y) - 1)


def assert_valid_path(path, rows, cols):
    assert path[0] == (0, 0)
    assert path[-1] == (rows - 1, cols - 1)
    for (i, j), (k, m) in zip(path, path[1:]):
        assert (k - i, m - j) in ((1, 0), (0, 1), (1, 1))


def test_pearson_extremes():
    x = np.array([1.0, 2.0, 4.0, 3.0])
    assert pearson(x, x) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)


def test_pearson_symmetric_and_affine_invariant():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=40), rng.normal(size=40)
    r = pearson(x, y)
    assert pearson(y, x) == pytest.approx(r, abs=1e-15)
    assert pearson(3.5 * x + 2.0, y) == pytest.approx(r, abs=1e-12)
    assert pearson(x, 0.1 * y - 7.0) == pytest.approx(r, abs=1e-12)


def test_pearson_errors():
    with pytest.raises(DegenerateError):
        pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ShapeError):
        pearson([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(SizeError):
        pearson([1.0], [2.0])


def test_rolling_pearson_identical_series():
    x = random_walk(50, seed=1)
    np.testing.assert_allclose(rolling_pearson(x, x, window=10), 1.0)


def test_rolling_pearson_full_window_is_global():
    x, y = random_walk(30, seed=2), random_walk(30, seed=3)
    out = rolling_pearson(x, y, window=30)
    assert out.tolist() == [pearson(x, y)]


def test_rolling_pearson_slice_oracle():
    x, y = random_walk(60, seed=4), random_walk(60, seed=5)
    out = rolling_pearson(x, y, window=20)
    assert len(out) == 41
    assert out[17] == pearson(x[17:37], y[17:37])


def test_rolling_pearson_flags_constant_windows():
    x = np.r_[np.ones(5), np.arange(5.0)]
    y = np.arange(10.0)
    out = rolling_pearson(x, y, window=5)
    assert np.isnan(out[0])
    assert out[-1] == pytest.approx(1.0)


def test_rolling_pearson_errors():
    with pytest.raises(SizeError):
        rolling_pearson([1.0, 2.0], [1.0, 2.0], window=3)
    with pytest.raises(ArgumentError):
        rolling_pearson([1.0, 2.0], [1.0, 2.0], window=1)


def test_dtw_identity():
    x = random_walk(15, seed=6)
    result = dtw_distance(x, x)
    assert result.cost == 0.0
    assert result.path == tuple((i, i) for i in range(15))


def test_dtw_two_by_one():
    result = dtw_distance([0.0, 0.0], [1.0])
    assert result.cost == 2.0
    assert result.path == ((0, 0), (1, 0))


def test_dtw_matches_exhaustive_paths():
    rng = np.random.default_rng(7)
    for rows, cols in itertools.product(range(1, 7), repeat=2):
        x, y = rng.normal(size=rows), rng.normal(size=cols)
        result = dtw_distance(x, y)
        assert result.cost == pytest.approx(exhaustive_dtw(tuple(x), tuple(y)), abs=1e-12)
        assert_valid_path(result.path, rows, cols)


def test_dtw_symmetric_and_bounded_by_diagonal():
    x, y = random_walk(25, seed=8), random_walk(25, seed=9)
    cost = dtw_distance(x, y).cost
    assert dtw_distance(y, x).cost == pytest.approx(cost, abs=1e-9)
    assert cost <= np.abs(x - y).sum() + 1e-9


def test_dtw_band():
    x, y = random_walk(30, seed=10), random_walk(30, seed=11)
    free = dtw_distance(x, y).cost
    diagonal = dtw_distance(x, y, band=0)
    assert diagonal.cost == pytest.approx(np.abs(x - y).sum())
    assert free <= dtw_distance(x, y, band=3).cost <= diagonal.cost
    assert_valid_path(dtw_distance(x[:20], y, band=2).path, 20, 30)
    with pytest.raises(ArgumentError):
        dtw_distance(x, y, band=-1)


def test_dtw_rejects_empty_input():
    with pytest.raises(ArgumentError):
        dtw_distance([], [1.0])


def _common_closes():
    anf = load_series(published_csv("ANF.csv"))
    eog = load_series(published_csv("EOG.csv"))
    common = set(anf.dates) & set(eog.dates)
    x = np.array([bar.close for bar in anf if bar.date in common])
    y = np.array([bar.close for bar in eog if bar.date in common])
    return x, y


def test_anf_eog_close_correlation():
    x, y = _common_closes()
    r = pearson(minmax_normalize(x)[0], minmax_normalize(y)[0])
    assert r == pytest.approx(0.28, abs=0.02)


def test_anf_eog_dtw_cost():
    x, y = _common_closes()
    costs = {
        "raw": dtw_distance(x, y).cost,
        "normalized": dtw_distance(minmax_normalize(x)[0], minmax_normalize(y)[0]).cost,
    }
    errors = {mode: abs(cost - 209.95) / 209.95 for mode, cost in costs.items()}
    assert min(errors.values()) <= 0.25, costs
