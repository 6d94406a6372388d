import datetime as dt

import numpy as np
import pytest

from src.forwardtest.errors import DomainError, SizeError
from src.forwardtest.utils import validate_dates, validate_vector


def day(month, dom):
    """Calendar day in 2021"""
    return dt.date(2021, month, dom)


def test_validate_dates():
    # Valid dates
    validate_dates([day(1, 4), day(1, 5), day(1, 6)])
    validate_dates([day(1, 4), day(1, 4)], allow_duplicates=True)

    # Invalid dates
    with pytest.raises(ValueError):
        validate_dates([])  # Empty list

    with pytest.raises(ValueError):
        validate_dates([day(1, 5), day(1, 4)])  # Out of order

    with pytest.raises(ValueError):
        validate_dates([day(1, 4), day(1, 4)])  # Duplicate dates

    with pytest.raises(ValueError):
        validate_dates(["2021-01-04"])  # Not a date


def test_validate_vector():
    arr = validate_vector([1, 2, 3])
    assert arr.dtype == np.float64
    assert arr.tolist() == [1.0, 2.0, 3.0]

    with pytest.raises(SizeError):
        validate_vector([1.0], min_length=2)

    with pytest.raises(DomainError):
        validate_vector([1.0, 0.0], positive=True)

    with pytest.raises(ValueError):
        validate_vector([1.0, float("nan")])

    with pytest.raises(ValueError):
        validate_vector([[1.0, 2.0]])  # Not one-dimensional


def test_day():
    assert day(1, 4).isoformat() == "2021-01-04"
    assert day(12, 31).weekday() == 4
