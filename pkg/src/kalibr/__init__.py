"""Derivative-free Bayesian calibration of computational models.

The core is functional: states in, states out. Sigma-point Kalman
inversion and its ensemble-transform variant estimate parameters and
parameter uncertainty from forward-model evaluations alone; a
random-walk chain provides the posterior reference and a finite
difference quasi-Newton loop the gradient-based baseline. Built-in
forward problems range from a one-line scalar map to an embedded
interface compressible-flow piston oscillator and a spectral damage
field. Scikit-learn style estimator wrappers and a CLI sit on top.
"""

from .errors import (
    CalibrationError,
    EnsembleEvaluationError,
    ForwardModelError,
    KalibrError,
    NotPositiveDefiniteError,
    ValidationError,
)
from .forward_models import ForwardModel, LinearModel, ToyModel, evaluate_points
from .gaussian_core import GaussianState, SigmaEnsemble, sigma_points, unscented_weights
from .inversion import (
    EnsembleState,
    InverseProblem,
    OptimizationTrace,
    UkiTrace,
    etki_step,
    fd_quasi_newton,
    misfit,
    uki_run,
    uki_step,
)
from .mcmc import ChainConfig, ChainResult, posterior_stats, rwm_sample
from .rng import philox_generator
from .euler1d import FluidSolverError, exact_fs_riemann, muscl_reconstruct, roe_flux
from .piston import (
    FluidState1D,
    PistonModel,
    PistonScenario,
    PistonState,
    PistonTrace,
    coupled_advance,
    fluid_step_rk2,
    simulate_piston,
    structure_step_midpoint,
    synthesize_observations,
)
from .damage import (
    DamageFieldModel,
    DamageMap,
    FieldInversionReport,
    KLField,
    damage_envelope,
    damage_omega,
    kl_basis,
    kl_eigenpair,
    kl_eigenvalue,
    kl_mode,
    log_conductance,
    synthetic_field_inversion,
    synthetic_field_setup,
)
from .estimators import (
    EnsembleTransformKalmanInversion,
    FiniteDifferenceQuasiNewton,
    RandomWalkMetropolis,
    UnscentedKalmanInversion,
)
from .problems import ProblemBundle, build_problem

__version__ = "0.1.0"

__all__ = [
    "KalibrError",
    "ValidationError",
    "NotPositiveDefiniteError",
    "ForwardModelError",
    "EnsembleEvaluationError",
    "CalibrationError",
    "ForwardModel",
    "ToyModel",
    "LinearModel",
    "evaluate_points",
    "GaussianState",
    "SigmaEnsemble",
    "unscented_weights",
    "sigma_points",
    "InverseProblem",
    "misfit",
    "UkiTrace",
    "uki_step",
    "uki_run",
    "EnsembleState",
    "etki_step",
    "OptimizationTrace",
    "fd_quasi_newton",
    "ChainConfig",
    "ChainResult",
    "rwm_sample",
    "posterior_stats",
    "philox_generator",
    "FluidSolverError",
    "roe_flux",
    "muscl_reconstruct",
    "exact_fs_riemann",
    "FluidState1D",
    "PistonState",
    "PistonScenario",
    "PistonTrace",
    "PistonModel",
    "structure_step_midpoint",
    "fluid_step_rk2",
    "coupled_advance",
    "simulate_piston",
    "synthesize_observations",
    "kl_eigenvalue",
    "kl_mode",
    "kl_eigenpair",
    "kl_basis",
    "log_conductance",
    "DamageMap",
    "damage_omega",
    "KLField",
    "DamageFieldModel",
    "damage_envelope",
    "synthetic_field_setup",
    "synthetic_field_inversion",
    "FieldInversionReport",
    "UnscentedKalmanInversion",
    "EnsembleTransformKalmanInversion",
    "RandomWalkMetropolis",
    "FiniteDifferenceQuasiNewton",
    "ProblemBundle",
    "build_problem",
    "__version__",
]
