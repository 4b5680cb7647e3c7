"""Input-validation helpers used by the estimators and pipeline stages."""

from __future__ import annotations

from typing import Any, Iterable

import numpy as np

from .errors import ArgumentError, DataError


def require(condition: bool, message: str, exc: type[Exception] = ArgumentError) -> None:
    if not condition:
        raise exc(message)


def as_float_array(values: Iterable[Any], name: str, ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 ndarray, rejecting NaN/inf."""
    arr = np.asarray(values, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ArgumentError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} contains non-finite values")
    return arr


def check_fitted(estimator: Any, attribute: str) -> None:
    if getattr(estimator, attribute, None) is None:
        raise DataError(f"{type(estimator).__name__} is not fitted; call fit() first")


def check_min_samples(n: int, minimum: int, what: str) -> None:
    if n < minimum:
        raise DataError(f"need at least {minimum} {what}, got {n}")
