"""Exception types shared across the library.

Every failure a caller can act on derives from :class:`KalibrError` so that
drivers and the CLI can distinguish bad configuration (exit code 1) from
solver-side failures (exit code 2).
"""

from __future__ import annotations


class KalibrError(Exception):
    """Base class for all library errors."""


class ValidationError(KalibrError, ValueError):
    """Invalid argument or configuration value."""


class NotPositiveDefiniteError(KalibrError):
    """A matrix required to be symmetric positive definite is not.

    Parameters
    ----------
    label : str
        Which matrix failed (for error messages).
    iteration : int or None
        Iteration index when the failure happened inside an iterative driver.
    """

    def __init__(self, label: str, iteration: int | None = None):
        self.label = label
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"{label} is not symmetric positive definite{where}")


class ForwardModelError(KalibrError):
    """A single forward evaluation failed.

    Carries the offending parameter vector so drivers can report exactly
    which point broke instead of propagating silent NaNs.
    """

    def __init__(self, theta, reason: str):
        import numpy as np

        self.theta = np.asarray(theta, dtype=float)
        self.reason = reason
        super().__init__(f"forward model failed at theta={self.theta.tolist()}: {reason}")


class EnsembleEvaluationError(KalibrError):
    """One or more forward evaluations in a batch failed.

    Failures are collected, never skipped: ``failures`` maps the point index
    within the batch to the exception raised there.
    """

    def __init__(self, failures: dict):
        self.failures = dict(failures)
        idx = sorted(self.failures)
        detail = "; ".join(f"[{i}] {self.failures[i]}" for i in idx)
        super().__init__(f"{len(idx)} forward evaluation(s) failed: {detail}")


class CalibrationError(KalibrError):
    """An iterative driver aborted. Carries the partial trace accumulated so far.

    Attributes
    ----------
    iteration : int
        Index of the iteration that failed (0-based, counting update steps).
    trace : object or None
        Whatever history the driver had recorded before the failure.
    """

    def __init__(self, message: str, iteration: int, trace=None, cause: Exception | None = None):
        self.iteration = iteration
        self.trace = trace
        self.cause = cause
        super().__init__(f"{message} (iteration {iteration})")
