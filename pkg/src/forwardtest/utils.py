import datetime as dt
from typing import Sequence

import numpy as np

from .errors import DomainError, SizeError


def validate_dates(dates: Sequence[dt.date], allow_duplicates: bool = False):
    """
    Validate a sequence of bar dates.

    Parameters:
    dates (sequence): Calendar days in series order
    allow_duplicates (bool): If True, equal consecutive dates are accepted

    Raises:
    ValueError: If dates are missing, not dates, or out of order
    """
    if not dates:
        raise ValueError("No dates provided")

    if not all(isinstance(d, dt.date) for d in dates):
        raise ValueError("All dates must be datetime.date values")

    for prev, cur in zip(dates, dates[1:]):
        if cur < prev or (cur == prev and not allow_duplicates):
            raise ValueError(f"Dates must be strictly increasing: {prev} then {cur}")


def validate_vector(values, min_length: int = 1, positive: bool = False, name: str = "values") -> np.ndarray:
    """
    Validate a numeric vector and return it as a float64 array.

    Parameters:
    values (array-like): One-dimensional numeric input
    min_length (int): Smallest accepted length
    positive (bool): If True, every element must be > 0
    name (str): Label used in error messages

    Raises:
    ValueError: If the vector is too short, not 1-D, non-finite or non-positive
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")

    if arr.size < min_length:
        raise SizeError(f"{name} needs at least {min_length} elements, got {arr.size}")

    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite elements")

    if positive and np.any(arr <= 0):
        raise DomainError(f"{name} must be strictly positive")

    return arr
