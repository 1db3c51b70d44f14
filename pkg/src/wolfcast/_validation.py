"""Input validation helpers shared by the estimators."""

import numpy as np


def as_float_1d(values, name="values") -> np.ndarray:
    """Return ``values`` as a contiguous 1-d float64 array (NaN allowed)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def check_complete(arr: np.ndarray, name="series") -> np.ndarray:
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains missing or non-finite values; impute first")
    return arr


def check_same_length(y, y_hat):
    y = as_float_1d(y, "y")
    y_hat = as_float_1d(y_hat, "y_hat")
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.size} vs {y_hat.size}")
    if y.size == 0:
        raise ValueError("inputs are empty")
    return y, y_hat


def check_positive_int(value, name, minimum=1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
