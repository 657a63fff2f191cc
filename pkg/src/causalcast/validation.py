"""Input validation helpers used by the public estimators."""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError, ShapeError


def check_matrix(x, name: str = "X") -> np.ndarray:
    """Coerce ``x`` to a 2-D float64 array with finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ShapeError(f"{name} contains NaN/Inf entries")
    return arr


def check_panel_array(x, name: str = "X", min_rows: int = 1) -> np.ndarray:
    """Validate a (time x regions) panel array."""
    arr = check_matrix(x, name=name)
    if arr.shape[0] < min_rows:
        raise ShapeError(
            f"{name} needs at least {min_rows} rows, got {arr.shape[0]}"
        )
    return arr


def check_square(x, name: str = "matrix") -> np.ndarray:
    arr = check_matrix(x, name=name)
    if arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_in_unit_interval(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ConfigError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0.0:
        raise ConfigError(f"{name} must be > 0, got {value}")
    return value


def check_positive_int(value: int, name: str) -> int:
    ivalue = int(value)
    if ivalue < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value}")
    return ivalue
