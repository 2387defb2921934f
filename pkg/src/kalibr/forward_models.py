"""Forward model contract and the built-in analytic models.

A forward model maps a parameter vector to a predicted observation vector.
Implementations must be deterministic: same theta, same output, bit for bit.
Failures must surface as :class:`~kalibr.errors.ForwardModelError` carrying
the offending theta, never as silent NaNs in the output.
"""

from __future__ import annotations

import abc
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import EnsembleEvaluationError, ForwardModelError, ValidationError
from .validation import as_float_matrix, as_float_vector

__all__ = ["ForwardModel", "ToyModel", "LinearModel", "evaluate_points"]


class ForwardModel(abc.ABC):
    """Deterministic map from parameters to predicted observations.

    Attributes
    ----------
    n_theta : int
        Parameter dimension accepted by :meth:`evaluate`.
    n_y : int
        Length of the returned observation vector.
    parallel_safe : bool
        Whether concurrent calls to :meth:`evaluate` are allowed. Drivers
        honor this declaration and fall back to serial evaluation when it
        is False.
    """

    n_theta: int
    n_y: int
    parallel_safe: bool = True

    @abc.abstractmethod
    def evaluate(self, theta: np.ndarray) -> np.ndarray:
        """Return the predicted observation vector for ``theta``."""

    def _check_theta(self, theta) -> np.ndarray:
        arr = as_float_vector(theta, "theta")
        if arr.size != self.n_theta:
            raise ForwardModelError(
                arr, f"expected {self.n_theta} parameter(s), got {arr.size}"
            )
        return arr

    def __call__(self, theta) -> np.ndarray:
        return self.evaluate(theta)


class ToyModel(ForwardModel):
    """Scalar nonconvex map g(theta) = sin(5 theta) + theta.

    Paired with observation y = 0 and unit noise this gives a misfit
    surface with several local minima and a handful of global ones, which
    is what makes it a useful stress test for derivative-based baselines.
    """

    n_theta = 1
    n_y = 1
    parallel_safe = True

    def evaluate(self, theta) -> np.ndarray:
        t = self._check_theta(theta)[0]
        return np.array([np.sin(5.0 * t) + t])


class LinearModel(ForwardModel):
    """Affine map g(theta) = A theta + b."""

    parallel_safe = True

    def __init__(self, design: np.ndarray, offset: np.ndarray | None = None):
        design = as_float_matrix(design, "design")
        self.design = design
        self.n_y, self.n_theta = design.shape
        if offset is None:
            self.offset = np.zeros(self.n_y)
        else:
            self.offset = as_float_vector(offset, "offset")
            if self.offset.size != self.n_y:
                raise ValidationError(
                    f"offset has {self.offset.size} entries, expected {self.n_y}"
                )

    def evaluate(self, theta) -> np.ndarray:
        t = self._check_theta(theta)
        return self.design @ t + self.offset


def _checked_eval(model: ForwardModel, theta: np.ndarray) -> np.ndarray:
    out = np.asarray(model.evaluate(theta), dtype=float).reshape(-1)
    if out.size != model.n_y:
        raise ForwardModelError(
            theta, f"model returned {out.size} values, declared n_y={model.n_y}"
        )
    if not np.all(np.isfinite(out)):
        raise ForwardModelError(theta, "model returned non-finite values")
    return out


def evaluate_points(
    model: ForwardModel,
    thetas: np.ndarray,
    jobs: int = 1,
) -> np.ndarray:
    """Evaluate ``model`` at each row of ``thetas``.

    Results are assembled in row order regardless of completion order, so
    the output is independent of scheduling. With ``jobs`` > 1 and a model
    that declares itself ``parallel_safe``, evaluations run on a thread
    pool; models that release the GIL (the compiled solvers here do) scale
    with the pool width.

    Raises
    ------
    EnsembleEvaluationError
        If any evaluation fails. All failures are collected and reported
        together with their row indices; nothing is silently skipped.
    """
    pts = np.atleast_2d(np.asarray(thetas, dtype=float))
    n = pts.shape[0]
    jobs = int(jobs)
    if jobs < 1:
        raise ValidationError(f"jobs must be >= 1, got {jobs}")

    results: list[np.ndarray | None] = [None] * n
    failures: dict[int, Exception] = {}

    if jobs == 1 or not model.parallel_safe or n == 1:
        for i in range(n):
            try:
                results[i] = _checked_eval(model, pts[i])
            except Exception as exc:  # noqa: BLE001 - collected and re-raised
                failures[i] = exc
    else:
        with ThreadPoolExecutor(max_workers=min(jobs, n)) as pool:
            futures = {i: pool.submit(_checked_eval, model, pts[i]) for i in range(n)}
            for i, fut in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    failures[i] = exc

    if failures:
        raise EnsembleEvaluationError(failures)
    return np.vstack(results)
