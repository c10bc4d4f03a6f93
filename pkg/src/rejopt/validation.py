"""Input validation helpers.

Small, reusable checks that turn malformed inputs into typed package errors
with readable messages. Estimators and free functions call these at their
boundaries; internal code may assume validated arrays.
"""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import DomainError, NotFittedError, ShapeError


def as_float_vector(values: Any, name: str) -> np.ndarray:
    """Coerce to a 1-D float64 array, rejecting non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def as_label_vector(values: Any, name: str = "labels") -> np.ndarray:
    """Coerce to a 1-D int64 array of labels >= 1."""
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        rounded = np.asarray(arr, dtype=np.float64)
        if not np.all(np.isfinite(rounded)) or np.any(rounded != np.floor(rounded)):
            raise DomainError(f"{name} must be integers, got dtype {arr.dtype}")
        arr = rounded
    arr = arr.astype(np.int64, copy=False)
    if arr.size and arr.min() < 1:
        raise DomainError(f"{name} must be >= 1, found {arr.min()}")
    return arr


def as_feature_matrix(values: Any, name: str = "features"):
    """Coerce to a 2-D float64 matrix; CSR passes through, dense is copied as needed.

    Returns either an ndarray or a scipy CSR matrix. All stored entries must
    be finite.
    """
    if sp.issparse(values):
        mat = values.tocsr()
        if mat.ndim != 2:
            raise ShapeError(f"{name} must be 2-D, got shape {mat.shape}")
        if mat.data.size and not np.all(np.isfinite(mat.data)):
            raise DomainError(f"{name} contains non-finite values")
        if mat.dtype != np.float64:
            mat = mat.astype(np.float64)
        return mat
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def check_same_length(names: Sequence[str], *arrays) -> int:
    """Require equal first-dimension lengths; return the common length."""
    lengths = [a.shape[0] for a in arrays]
    if len(set(lengths)) > 1:
        detail = ", ".join(f"{n}={l}" for n, l in zip(names, lengths))
        raise ShapeError(f"length mismatch: {detail}")
    return lengths[0] if lengths else 0


def check_probability(value: float, name: str, *, allow_zero: bool = True) -> float:
    """Require a float in [0, 1] (or (0, 1] with allow_zero=False)."""
    value = float(value)
    if not np.isfinite(value) or value < 0.0 or value > 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value}")
    if not allow_zero and value == 0.0:
        raise DomainError(f"{name} must be > 0, got {value}")
    return value


def check_fitted(estimator: Any, attribute: str) -> None:
    """Raise NotFittedError unless ``estimator`` carries ``attribute``."""
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )


def n_features(matrix) -> int:
    """Column count of a dense or sparse matrix."""
    return int(matrix.shape[1])
