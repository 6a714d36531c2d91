"""Input validation helpers used across the package.

All numeric entry points normalize their inputs through these helpers so the
estimators and loss kernels can assume float64 arrays of the right shape.
"""

from __future__ import annotations

import numpy as np


def as_vector(x, name: str = "x", min_len: int = 1) -> np.ndarray:
    """Coerce to a 1-D float64 array of length >= min_len."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_len:
        raise ValueError(f"{name} must have at least {min_len} entries, got {arr.shape[0]}")
    return arr


def as_matrix(x, name: str = "x") -> np.ndarray:
    """Coerce to a 2-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    return arr


def check_same_length(a: np.ndarray, b: np.ndarray, name_a: str = "yhat", name_b: str = "y") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{name_a} and {name_b} must have equal shapes, got {a.shape} vs {b.shape}")


def check_finite(x: np.ndarray, name: str = "x") -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
