import numpy as np
from typing import Optional

from utils.exceptions import DimensionMismatch, ValidationError


class ArrayValidator:
    """Shape and value checks for the arrays the estimators consume"""

    SUM_TOLERANCE = 1e-9

    @classmethod
    def matrix(
        cls, x, name: str = "x", n_cols: Optional[int] = None, finite: bool = True
    ) -> np.ndarray:
        """
        Coerce input to a 2-D float array

        Args:
            x: Array-like input, a vector is read as a single column
            name (str): Name used in error messages
            n_cols (int, optional): Required number of columns
            finite (bool): Whether NaN/inf entries are rejected

        Returns:
            np.ndarray: Float array of shape (n, p)

        Raises:
            DimensionMismatch: If the array is not 2-D or has the wrong width
            ValidationError: If entries are not finite
        """
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, np.newaxis]
        if arr.ndim != 2:
            raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
        if n_cols is not None and arr.shape[1] != n_cols:
            raise DimensionMismatch(
                f"{name} has {arr.shape[1]} columns, expected {n_cols}"
            )
        if finite and not np.all(np.isfinite(arr)):
            raise ValidationError(f"{name} contains non-finite values")
        return arr

    @classmethod
    def vector(
        cls, v, name: str = "y", length: Optional[int] = None, finite: bool = True
    ) -> np.ndarray:
        """Coerce input to a 1-D float array, optionally of a fixed length"""
        arr = np.asarray(v, dtype=float)
        if arr.ndim == 2 and 1 in arr.shape:
            arr = arr.ravel()
        if arr.ndim != 1:
            raise DimensionMismatch(f"{name} must be 1-D, got shape {arr.shape}")
        if length is not None and arr.shape[0] != length:
            raise DimensionMismatch(
                f"{name} has length {arr.shape[0]}, expected {length}"
            )
        if finite and not np.all(np.isfinite(arr)):
            raise ValidationError(f"{name} contains non-finite values")
        return arr

    @classmethod
    def point(cls, x, p: int, name: str = "x") -> np.ndarray:
        """Coerce a single covariate vector of dimension p"""
        return cls.vector(x, name=name, length=p)

    @classmethod
    def is_probability_vector(cls, v, tol: float = SUM_TOLERANCE) -> bool:
        """Check nonnegativity and unit sum"""
        try:
            arr = np.asarray(v, dtype=float)
            return bool(
                arr.ndim == 1
                and np.all(np.isfinite(arr))
                and np.all(arr >= 0)
                and abs(arr.sum() - 1.0) <= tol
            )
        except (TypeError, ValueError):
            return False

    @classmethod
    def is_column_stochastic(cls, m, tol: float = SUM_TOLERANCE) -> bool:
        """Check a square matrix has nonnegative entries and unit column sums"""
        try:
            arr = np.asarray(m, dtype=float)
            return bool(
                arr.ndim == 2
                and arr.shape[0] == arr.shape[1]
                and np.all(np.isfinite(arr))
                and np.all(arr >= 0)
                and np.all(np.abs(arr.sum(axis=0) - 1.0) <= tol)
            )
        except (TypeError, ValueError):
            return False

    @staticmethod
    def require(condition: bool, message: str):
        """Raise ValidationError unless condition holds"""
        if not condition:
            raise ValidationError(message)
