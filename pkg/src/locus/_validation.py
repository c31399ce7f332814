"""Input validation and the order-statistic quantile convention shared by every module."""

from __future__ import annotations

import math

import numpy as np

# Guards ceil() against products such as 0.7 * 10 == 7.000000000000001.
_RANK_EPS = 1e-9


class ValidationError(ValueError):
    """Raised when an argument violates a documented precondition."""


def check_matrix(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{name} contains non-finite values")
    return X


def check_vector(v, name="values", allow_empty=False):
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0 and not allow_empty:
        raise ValidationError(f"{name} must be nonempty")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} contains non-finite values")
    return v


def check_consistent_length(*arrays):
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise ValidationError(f"inconsistent lengths: {sorted(lengths)}")


def check_open_unit(value, name):
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValidationError(f"{name} must lie in (0, 1), got {value}")
    return value


def ceil_rank(level, m):
    """1-based rank ceil(level * m), clipped to [1, m]."""
    return min(max(math.ceil(level * m - _RANK_EPS), 1), m)


def order_statistic(values, level):
    """Sorted value at 1-based index ceil(level * m): the project quantile convention."""
    values = np.sort(np.asarray(values, dtype=float).ravel())
    if values.size == 0:
        raise ValidationError("cannot take a quantile of an empty vector")
    return float(values[ceil_rank(level, values.size) - 1])


def check_random_state(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
