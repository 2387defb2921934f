"""Named calibration problems shared by the command line and the tests.

Each bundle packages an inverse problem with sensible initialization for
every method. Synthetic data is generated with a dedicated data seed so
changing a method's seed never changes the data it calibrates against;
two methods pointed at the same problem name therefore target the same
posterior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .damage import SyntheticFieldSetup, synthetic_field_setup
from .errors import ValidationError
from .forward_models import LinearModel, ToyModel
from .inversion import InverseProblem
from .piston import PistonModel, PistonScenario, synthesize_observations

__all__ = [
    "PROBLEM_NAMES",
    "DEFAULT_DATA_SEED",
    "PISTON_OBS_NOISE",
    "ProblemBundle",
    "build_problem",
]

PROBLEM_NAMES = ("toy", "linear", "piston2", "piston3", "damage_synthetic")

# deliberately not 0: method seeds and data seeds must not collide by default
DEFAULT_DATA_SEED = 2718

PISTON_OBS_NOISE = 2e-3

# a fixed overdetermined system with a unique least-squares solution
_LINEAR_DESIGN = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
_LINEAR_Y = np.array([1.0, 0.0, -1.0])


@dataclass(frozen=True)
class ProblemBundle:
    """An inverse problem plus per-problem defaults for the drivers."""

    name: str
    problem: InverseProblem
    init_mean: np.ndarray
    init_cov: np.ndarray
    n_iterations: int
    theta_ref: np.ndarray | None = None
    scenario: PistonScenario | None = None
    field: SyntheticFieldSetup | None = None


def _piston_bundle(name: str, theta_ref: np.ndarray, data_seed: int) -> ProblemBundle:
    scenario = PistonScenario()
    model = PistonModel(n_params=theta_ref.size, scenario=scenario)
    clean = model(theta_ref)
    y_obs = synthesize_observations(clean, PISTON_OBS_NOISE, data_seed)
    sigma_eta = PISTON_OBS_NOISE**2 * np.eye(model.n_y)
    n = theta_ref.size
    return ProblemBundle(
        name=name,
        problem=InverseProblem(model, y_obs, sigma_eta),
        init_mean=np.ones(n),
        init_cov=0.01 * np.eye(n),
        n_iterations=15,
        theta_ref=theta_ref,
        scenario=scenario,
    )


def build_problem(name: str, data_seed: int = DEFAULT_DATA_SEED) -> ProblemBundle:
    """Assemble a named problem with its default initialization."""
    if name == "toy":
        model = ToyModel()
        return ProblemBundle(
            name=name,
            problem=InverseProblem(model, np.zeros(1), np.eye(1)),
            init_mean=np.array([10.0]),
            init_cov=np.eye(1),
            n_iterations=30,
        )
    if name == "linear":
        model = LinearModel(_LINEAR_DESIGN)
        return ProblemBundle(
            name=name,
            problem=InverseProblem(model, _LINEAR_Y, np.eye(3)),
            init_mean=np.zeros(2),
            init_cov=np.eye(2),
            n_iterations=30,
        )
    if name == "piston2":
        return _piston_bundle(name, np.array([0.5, 2.0]), data_seed)
    if name == "piston3":
        return _piston_bundle(name, np.array([0.5, 2.0, 2.0]), data_seed)
    if name == "damage_synthetic":
        setup = synthetic_field_setup(seed=data_seed)
        n = setup.n_modes_inferred
        return ProblemBundle(
            name=name,
            problem=setup.problem,
            init_mean=np.zeros(n),
            init_cov=np.eye(n),
            n_iterations=15,
            theta_ref=setup.theta_truth[:n],
            field=setup,
        )
    raise ValidationError(
        f"unknown problem {name!r}; choose one of {', '.join(PROBLEM_NAMES)}"
    )
