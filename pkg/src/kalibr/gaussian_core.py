"""Gaussian states and the modified unscented transform.

The transform used throughout the library differs from the textbook UKF
transform in two ways: the scaling parameter is clamped so that every
covariance weight is strictly positive for any parameter dimension, and
means of mapped ensembles are estimated from the central point alone
(first order) rather than from a weighted average. Both choices trade a
little accuracy for robustness of the resulting covariance estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .validation import (
    as_float_vector,
    check_spd,
    spd_cholesky,
    symmetrized,
)

__all__ = [
    "GaussianState",
    "SigmaWeights",
    "SigmaEnsemble",
    "unscented_weights",
    "sigma_points",
    "estimate_moments",
]


@dataclass(frozen=True)
class GaussianState:
    """Mean and covariance of a Gaussian over the parameter space.

    Parameters
    ----------
    mean : ndarray, shape (n_params,)
    cov : ndarray, shape (n_params, n_params)
        Must be symmetric to within 1e-12 relative tolerance and positive
        definite. The stored covariance is the symmetrized input.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = as_float_vector(self.mean, "mean")
        cov = check_spd(self.cov, "cov")
        if cov.shape[0] != mean.size:
            raise ValidationError(
                f"cov has size {cov.shape[0]} but mean has {mean.size} entries"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_params(self) -> int:
        return self.mean.size

    def std(self) -> np.ndarray:
        """Componentwise standard deviations (sqrt of the covariance diagonal)."""
        return np.sqrt(np.diag(self.cov))


@dataclass(frozen=True)
class SigmaWeights:
    """Weights and spread of the modified unscented transform.

    Attributes
    ----------
    n_params : int
        Parameter dimension the weights were built for.
    kappa : float
        Secondary scaling offset. Exposed for completeness; the default 0
        is used everywhere and never tuned automatically.
    alpha : float
        Primary scaling, clamped to min(sqrt(4 / (n_params + kappa)), 1).
    lam : float
        Composite scale alpha^2 (n_params + kappa) - n_params.
    spread : float
        Distance of the off-center points from the mean in units of
        Cholesky columns: sqrt(n_params + lam).
    cov_weight : float
        Weight of every off-center point in covariance estimates:
        1 / (2 (n_params + lam)). Strictly positive by construction.
    """

    n_params: int
    kappa: float
    alpha: float
    lam: float
    spread: float
    cov_weight: float


def unscented_weights(n_params: int, kappa: float = 0.0) -> SigmaWeights:
    """Build modified unscented transform weights for ``n_params`` dimensions.

    The clamp on alpha keeps n_params + lam = alpha^2 (n_params + kappa)
    positive and bounded by 4, so covariance weights stay positive in any
    dimension (the textbook choice turns negative for n_params > 3).

    Raises
    ------
    ValidationError
        If ``n_params`` is not a positive integer or ``kappa`` <= -n_params.
    """
    if int(n_params) != n_params or n_params < 1:
        raise ValidationError(f"n_params must be a positive integer, got {n_params}")
    n = int(n_params)
    kappa = float(kappa)
    if kappa <= -n:
        raise ValidationError(f"kappa must exceed -n_params, got kappa={kappa}, n_params={n}")
    alpha = min(np.sqrt(4.0 / (n + kappa)), 1.0)
    lam = alpha * alpha * (n + kappa) - n
    spread = float(np.sqrt(n + lam))
    cov_weight = 1.0 / (2.0 * (n + lam))
    return SigmaWeights(
        n_params=n,
        kappa=kappa,
        alpha=float(alpha),
        lam=float(lam),
        spread=spread,
        cov_weight=float(cov_weight),
    )


@dataclass(frozen=True)
class SigmaEnsemble:
    """Deterministic sigma points drawn from a Gaussian state.

    ``points[0]`` is the mean; point ``1 + j`` and point ``1 + n_params + j``
    are placed symmetrically along the j-th column of the lower Cholesky
    factor of the covariance.
    """

    points: np.ndarray
    weights: SigmaWeights
    state: GaussianState = field(repr=False)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_params(self) -> int:
        return self.points.shape[1]


def sigma_points(
    state: GaussianState,
    kappa: float = 0.0,
    nugget: float = 0.0,
) -> SigmaEnsemble:
    """Generate the 2 n_params + 1 sigma points of ``state``.

    Parameters
    ----------
    state : GaussianState
    kappa : float
        Passed through to :func:`unscented_weights`.
    nugget : float
        Optional diagonal ridge added before the Cholesky factorization.
        Off by default; when used it is logged.

    Raises
    ------
    NotPositiveDefiniteError
        If the (symmetrized, optionally ridged) covariance cannot be factored.
    """
    n = state.n_params
    weights = unscented_weights(n, kappa=kappa)
    cov = symmetrized(state.cov, "cov")
    chol = spd_cholesky(cov, "cov", nugget=nugget)
    offsets = weights.spread * chol.T  # row j is spread * (Cholesky column j)
    points = np.empty((2 * n + 1, n))
    points[0] = state.mean
    points[1 : n + 1] = state.mean + offsets
    points[n + 1 :] = state.mean - offsets
    return SigmaEnsemble(points=points, weights=weights, state=state)


def estimate_moments(
    ensemble: SigmaEnsemble,
    evals_a: np.ndarray,
    evals_b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """First-order mean and weighted cross-covariance of mapped sigma points.

    Parameters
    ----------
    ensemble : SigmaEnsemble
        The generating ensemble (supplies the weights).
    evals_a, evals_b : ndarray, shape (n_points, dim_a) and (n_points, dim_b)
        Images of each sigma point under two maps, ordered like
        ``ensemble.points``.

    Returns
    -------
    mean_a : ndarray, shape (dim_a,)
        The central-point image ``evals_a[0]`` (first-order mean estimate).
    cross_cov : ndarray, shape (dim_a, dim_b)
        sum_j cov_weight * (a_j - a_0)(b_j - b_0)^T over the off-center
        points only. Exact for linear maps.
    """
    a = np.atleast_2d(np.asarray(evals_a, dtype=float))
    b = np.atleast_2d(np.asarray(evals_b, dtype=float))
    n_points = ensemble.n_points
    if a.shape[0] != n_points:
        raise ValidationError(
            f"evals_a has {a.shape[0]} rows but the ensemble has {n_points} points"
        )
    if b.shape[0] != n_points:
        raise ValidationError(
            f"evals_b has {b.shape[0]} rows but the ensemble has {n_points} points"
        )
    mean_a = a[0].copy()
    dev_a = a[1:] - a[0]
    dev_b = b[1:] - b[0]
    cross = ensemble.weights.cov_weight * (dev_a.T @ dev_b)
    return mean_a, cross
