import numpy as np
import pytest

from kalibr.errors import ForwardModelError, KalibrError, ValidationError
from kalibr.forward_models import ForwardModel, LinearModel
from kalibr.inversion import InverseProblem
from kalibr.mcmc import ChainConfig, ChainResult, posterior_stats, rwm_sample


def test_config_validation():
    with pytest.raises(ValidationError):
        ChainConfig(step_size=0.0)
    with pytest.raises(ValidationError):
        ChainConfig(n_samples=100, burn_in=100)
    with pytest.raises(ValidationError):
        ChainConfig(n_samples=0)


class _Constant(ForwardModel):
    n_theta = 1
    n_y = 1

    def evaluate(self, theta):
        self._check_theta(theta)
        return np.zeros(1)


def test_constant_misfit_accepts_everything():
    problem = InverseProblem(_Constant(), np.zeros(1), np.eye(1))
    result = rwm_sample(problem, np.zeros(1), ChainConfig(n_samples=500, burn_in=0, seed=1))
    assert result.acceptance_rate == 1.0
    assert result.n_retained == 500


def test_scalar_gaussian_target_moments():
    # posterior is N(0, 0.3^2): identity map, y=0, noise variance 0.09
    class Identity(ForwardModel):
        n_theta = 1
        n_y = 1

        def evaluate(self, theta):
            return self._check_theta(theta).copy()

    problem = InverseProblem(Identity(), np.zeros(1), np.array([[0.09]]))
    config = ChainConfig(step_size=0.3, n_samples=50_000, burn_in=10_000, seed=5)
    result = rwm_sample(problem, np.zeros(1), config)
    mean, cov = posterior_stats(result)
    assert abs(mean[0]) <= 0.02
    assert abs(np.sqrt(cov[0, 0]) - 0.3) <= 0.05 * 0.3
    assert abs(cov[0, 0] - 0.09) <= 0.1 * 0.09


def test_posterior_stats_frozen_examples():
    mean, cov = posterior_stats(np.array([[2.0], [2.0]]))
    assert mean.tolist() == [2.0]
    assert cov.tolist() == [[0.0]]
    mean, cov = posterior_stats(np.array([[0.0], [2.0]]))
    assert mean.tolist() == [1.0]
    assert cov.tolist() == [[2.0]]


def test_posterior_stats_rejects_single_sample():
    with pytest.raises(ValidationError):
        posterior_stats(np.array([[1.0]]))


class _TwoLevel(ForwardModel):
    """Piecewise-constant misfit on [0, 1]: the right half is e^{-ln 2}
    less likely than the left half, and everything outside is rejected."""

    n_theta = 1
    n_y = 1
    level = np.sqrt(2.0 * np.log(2.0))

    def evaluate(self, theta):
        t = self._check_theta(theta)
        if not 0.0 <= t[0] <= 1.0:
            raise ForwardModelError(t, "outside the box")
        return np.array([0.0 if t[0] < 0.5 else self.level])


def test_detailed_balance_on_two_level_target():
    # stationary law: P(left) = 2 P(right) exactly (equal widths, misfit
    # difference ln 2), brute-force oracle for the visit frequencies
    problem = InverseProblem(_TwoLevel(), np.zeros(1), np.eye(1))
    config = ChainConfig(step_size=0.25, n_samples=100_000, burn_in=5_000, seed=11)
    result = rwm_sample(problem, np.array([0.25]), config)
    freq_left = float(np.mean(result.samples[:, 0] < 0.5))
    assert abs(freq_left - 2.0 / 3.0) <= 0.02
    assert np.all(result.samples >= 0.0) and np.all(result.samples <= 1.0)


def test_seed_determinism_bitwise(toy_problem):
    config = ChainConfig(step_size=0.5, n_samples=2_000, burn_in=100, seed=42)
    a = rwm_sample(toy_problem, np.ones(1), config)
    b = rwm_sample(toy_problem, np.ones(1), config)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.acceptance_rate == b.acceptance_rate


def test_different_seeds_differ(toy_problem):
    a = rwm_sample(toy_problem, np.ones(1), ChainConfig(n_samples=50, burn_in=0, seed=0))
    b = rwm_sample(toy_problem, np.ones(1), ChainConfig(n_samples=50, burn_in=0, seed=1))
    assert not np.array_equal(a.samples, b.samples)


def test_infinite_start_is_fatal():
    problem = InverseProblem(_TwoLevel(), np.zeros(1), np.eye(1))
    with pytest.raises(KalibrError):
        rwm_sample(problem, np.array([5.0]), ChainConfig(n_samples=10, burn_in=0))


def test_result_bookkeeping(toy_problem):
    config = ChainConfig(step_size=0.5, n_samples=300, burn_in=120, seed=9)
    result = rwm_sample(toy_problem, np.zeros(1), config)
    assert isinstance(result, ChainResult)
    assert result.samples.shape == (180, 1)
    assert 0.0 <= result.acceptance_rate <= 1.0
