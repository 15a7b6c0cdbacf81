"""Input validation helpers used by the public API surface."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def as_float_array(x, name: str = "array", ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 ndarray and check finiteness."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains NaN or Inf values")
    return arr


def check_rate(rate_hz: float, name: str = "rate_hz") -> float:
    rate = float(rate_hz)
    if not np.isfinite(rate) or rate <= 0:
        raise DataError(f"{name} must be a positive finite scalar, got {rate_hz!r}")
    return rate


def check_same_length(a: np.ndarray, b: np.ndarray, what: str = "signals") -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DataError(
            f"{what} must have equal length, got {a.shape[-1]} and {b.shape[-1]}"
        )


def check_probability_vector(values, name: str = "selection") -> np.ndarray:
    vec = as_float_array(values, name=name, ndim=1)
    if vec.size == 0:
        raise DataError(f"{name} must be non-empty")
    if vec.min() < 0.0 or vec.max() > 1.0:
        raise DataError(f"{name} values must lie in [0, 1]")
    return vec
