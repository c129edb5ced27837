"""Validation utilities."""

from typing import Sequence

import numpy as np

from gle_homog.utils import errors


def as_matrix(value, name: str) -> np.ndarray:
    """
    Coerce a nested sequence or scalar into a finite 2D float array.

    Args:
        value: Scalar, nested list or array
        name: Name used in error messages

    Returns:
        A 2D float64 array

    Raises:
        DimensionMismatchError: If the value has more than two axes
        InvalidParameterError: If any entry is not finite
    """
    arr = np.array(value, dtype=float, ndmin=2)
    if arr.ndim != 2:
        raise errors.DimensionMismatchError(f"{name} must be a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise errors.InvalidParameterError(f"{name} has non-finite entries")
    return arr


def require_square(m: np.ndarray, name: str) -> int:
    """
    Validate that a matrix is square.

    Args:
        m: The matrix
        name: Name used in error messages

    Returns:
        The side length

    Raises:
        DimensionMismatchError: If the matrix is not square
    """
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise errors.DimensionMismatchError(f"{name} must be square, got shape {m.shape}")
    return m.shape[0]


def require_positive(value: float, name: str) -> float:
    """
    Validate that a scalar is finite and strictly positive.

    Raises:
        InvalidParameterError: If the value is not a positive finite number
    """
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise errors.InvalidParameterError(f"{name} must be positive, got {value}")
    return value


def require_decreasing(values: Sequence[float], name: str) -> list:
    """
    Validate that a sequence of positive numbers is non-increasing.

    Raises:
        InvalidParameterError: If the sequence is empty, has non-positive entries or increases
    """
    values = [float(v) for v in values]
    if not values:
        raise errors.InvalidParameterError(f"{name} must not be empty")
    if any(v <= 0 for v in values):
        raise errors.InvalidParameterError(f"{name} must contain positive values, got {values}")
    if any(b > a for a, b in zip(values, values[1:])):
        raise errors.InvalidParameterError(f"{name} must be non-increasing, got {values}")
    return values
