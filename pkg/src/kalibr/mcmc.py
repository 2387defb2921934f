"""Random-walk Metropolis reference sampler.

The sampler targets exp(-misfit) with a flat improper prior, which is the
posterior the Kalman drivers approximate. It exists to provide reference
moments, so it is deliberately plain: isotropic Gaussian proposals with a
fixed step size and no adaptation.

Randomness comes from numpy's Philox bit generator, a counter-based
generator whose stream for a given seed does not depend on the platform.
Each chain step draws the proposal vector first and the acceptance variate
second, so the stream layout is fixed regardless of the accept/reject
pattern.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ForwardModelError, KalibrError, ValidationError
from .inversion import InverseProblem, misfit
from .rng import philox_generator
from .validation import as_float_vector

__all__ = ["ChainConfig", "ChainResult", "rwm_sample", "posterior_stats"]


@dataclass(frozen=True)
class ChainConfig:
    """Random-walk Metropolis settings.

    ``n_samples`` counts every chain state including burn-in;
    ``burn_in`` states are discarded from the front, so
    ``n_samples - burn_in`` samples are retained.
    """

    step_size: float = 1e-2
    n_samples: int = 50_000
    burn_in: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.step_size) or self.step_size <= 0.0:
            raise ValidationError(f"step_size must be positive, got {self.step_size}")
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ValidationError(f"n_samples must be a positive integer, got {self.n_samples}")
        if int(self.burn_in) != self.burn_in or not 0 <= self.burn_in < self.n_samples:
            raise ValidationError(
                f"burn_in must satisfy 0 <= burn_in < n_samples, got {self.burn_in}"
            )


@dataclass(frozen=True)
class ChainResult:
    """Retained samples and the exact acceptance fraction."""

    samples: np.ndarray
    acceptance_rate: float
    config: ChainConfig
    theta0: np.ndarray

    @property
    def n_retained(self) -> int:
        return self.samples.shape[0]


def _negative_log_post(problem: InverseProblem, theta: np.ndarray) -> float:
    """Misfit at theta; +inf when the forward model rejects the point."""
    try:
        g = problem.forward.evaluate(theta)
        g = np.asarray(g, dtype=float).reshape(-1)
        if not np.all(np.isfinite(g)):
            return np.inf
        return misfit(problem, g)
    except ForwardModelError:
        return np.inf


def rwm_sample(
    problem: InverseProblem,
    theta0: np.ndarray,
    config: ChainConfig,
) -> ChainResult:
    """Run a random-walk Metropolis chain on ``exp(-misfit)``.

    Proposals are theta + step_size * xi with xi standard normal. A
    proposal whose misfit is non-finite (including one the forward model
    rejects outright) is simply rejected and the chain continues; a
    non-finite misfit at ``theta0`` is a fatal error because the chain
    would never leave it.

    Returns
    -------
    ChainResult
        Samples after burn-in and the acceptance rate over all proposals.
    """
    theta = as_float_vector(theta0, "theta0").copy()
    if theta.size != problem.n_params:
        raise ValidationError(
            f"theta0 has {theta.size} entries but the forward model takes "
            f"{problem.n_params}"
        )

    phi = _negative_log_post(problem, theta)
    if not np.isfinite(phi):
        raise KalibrError(
            f"misfit at theta0={theta.tolist()} is not finite; "
            "the chain cannot start there"
        )

    rng = philox_generator(config.seed)
    n_dim = theta.size
    chain = np.empty((config.n_samples, n_dim))
    n_accept = 0

    for i in range(config.n_samples):
        xi = rng.standard_normal(n_dim)
        log_u = np.log(rng.random())
        proposal = theta + config.step_size * xi
        phi_prop = _negative_log_post(problem, proposal)
        if np.isfinite(phi_prop) and log_u < phi - phi_prop:
            theta = proposal
            phi = phi_prop
            n_accept += 1
        chain[i] = theta

    return ChainResult(
        samples=chain[config.burn_in :],
        acceptance_rate=n_accept / config.n_samples,
        config=config,
        theta0=as_float_vector(theta0, "theta0"),
    )


def posterior_stats(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and unbiased covariance of retained samples.

    Accepts an (n, d) array or a :class:`ChainResult`.
    """
    if isinstance(samples, ChainResult):
        samples = samples.samples
    arr = np.atleast_2d(np.asarray(samples, dtype=float))
    if arr.shape[0] < 2:
        raise ValidationError("need at least 2 samples for an unbiased covariance")
    mean = arr.mean(axis=0)
    centered = arr - mean
    cov = centered.T @ centered / (arr.shape[0] - 1)
    return mean, cov
