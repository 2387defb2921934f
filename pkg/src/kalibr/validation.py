"""Input validation helpers.

Small, strict converters used at every public entry point. They normalize
to float64 ndarrays and fail loudly with the offending argument named, so
numerical kernels can assume clean inputs.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import NotPositiveDefiniteError, ValidationError

logger = logging.getLogger("kalibr")

# Relative asymmetry tolerated before a covariance argument is rejected.
SYMMETRY_RTOL = 1e-12


def as_float_vector(x, name: str) -> np.ndarray:
    """Coerce to a finite 1-d float64 array."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def as_float_matrix(x, name: str) -> np.ndarray:
    """Coerce to a finite 2-d float64 array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def as_square_matrix(x, name: str, size: int | None = None) -> np.ndarray:
    arr = as_float_matrix(x, name)
    if arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValidationError(f"{name} must have size {size}, got {arr.shape[0]}")
    return arr


def symmetrized(mat: np.ndarray, name: str, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Check symmetry to within ``rtol`` (relative) and absorb roundoff drift.

    Returns (mat + mat.T) / 2 so downstream factorizations see an exactly
    symmetric matrix.
    """
    mat = as_square_matrix(mat, name)
    asym = np.abs(mat - mat.T).max()
    scale = max(np.abs(mat).max(), 1.0)
    if asym > rtol * scale:
        raise ValidationError(
            f"{name} is not symmetric: max asymmetry {asym:.3e} exceeds "
            f"{rtol:.1e} relative tolerance"
        )
    return 0.5 * (mat + mat.T)


def spd_cholesky(
    mat: np.ndarray,
    name: str,
    nugget: float = 0.0,
    iteration: int | None = None,
) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    ``nugget`` adds a diagonal ridge before factorization; using it is logged
    because it changes the factored matrix. Failure raises
    :class:`NotPositiveDefiniteError` with the matrix named.
    """
    if nugget < 0.0:
        raise ValidationError(f"nugget must be >= 0, got {nugget}")
    work = mat
    if nugget > 0.0:
        logger.info("adding diagonal nugget %.3e to %s before factorization", nugget, name)
        work = mat + nugget * np.eye(mat.shape[0])
    try:
        return np.linalg.cholesky(work)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(name, iteration=iteration) from None


def check_spd(mat: np.ndarray, name: str, iteration: int | None = None) -> np.ndarray:
    """Validate symmetry and positive definiteness; return the symmetrized matrix."""
    sym = symmetrized(mat, name)
    spd_cholesky(sym, name, iteration=iteration)
    return sym


def as_positive_float(x, name: str) -> float:
    val = float(x)
    if not np.isfinite(val) or val <= 0.0:
        raise ValidationError(f"{name} must be a positive finite number, got {x}")
    return val


def as_nonnegative_float(x, name: str) -> float:
    val = float(x)
    if not np.isfinite(val) or val < 0.0:
        raise ValidationError(f"{name} must be a non-negative finite number, got {x}")
    return val


def as_positive_int(x, name: str) -> int:
    val = int(x)
    if val != x or val <= 0:
        raise ValidationError(f"{name} must be a positive integer, got {x}")
    return val
