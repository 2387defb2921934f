"""Piston on a gas column: the coupled fluid-structure test problem.

A tube of perfect gas occupies the left part of a fixed grid. Its right
boundary is a piston held by a spring and damper anchored to the right.
The piston displacement u is measured against the lab axis so that the
piston face sits at x_p = 1 - u; gas pressure pushes the piston away from
the fluid, which makes u decrease, the face move right, and a rarefaction
run back into the gas. (Writing the load as +p in the u-equation would
drive the piston into the gas instead; the reference-run regression test
asserts the interface pressure drops from its initial value, which pins
the sign.)

Coupling is staggered with one data exchange per step:

1. the structure state predicts its half-step position, which decides the
   set of active cells (cells uncovered by the receding face start from
   the exact interface Riemann state);
2. the fluid takes a full RK2 step seeing the current interface velocity;
3. the structure takes a full implicit-midpoint step under the effective
   interface pressure from that fluid step.

The structure integrator is the implicit midpoint rule, solved in closed
form (the system is linear), so the undamped unforced oscillator conserves
its discrete energy exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .errors import ForwardModelError, KalibrError, ValidationError
from .euler1d import (
    STATUS_DOMAIN,
    STATUS_NEGATIVE_STATE,
    STATUS_OK,
    FluidSolverError,
    _rk2,
    _wall_riemann,
)
from .forward_models import ForwardModel
from .rng import philox_generator
from .validation import (
    as_float_vector,
    as_nonnegative_float,
    as_positive_float,
    as_positive_int,
)

__all__ = [
    "X_P_REF",
    "FluidState1D",
    "PistonState",
    "PistonScenario",
    "PistonTrace",
    "structure_step_midpoint",
    "fluid_step_rk2",
    "coupled_advance",
    "simulate_piston",
    "synthesize_observations",
    "PistonModel",
]

# Piston rest position: x_p = X_P_REF - u.
X_P_REF = 1.0

# Face-crossing slack, in cells: a face counts as crossed once the piston
# position passes it by more than this fraction of dx. Absorbs the roundoff
# in x_p / dx without changing any crossing decision at physical scales.
_FACE_EPS = 1e-9


def _active_count(x_p: float, dx: float, n_cells: int) -> int:
    return int(np.floor(x_p / dx + _FACE_EPS))


@dataclass(frozen=True)
class FluidState1D:
    """Gas state on the fixed grid.

    ``cons`` holds (rho, rho v, rho E) per cell. Active cells are the
    contiguous block of the first ``n_active`` cells; everything beyond
    the piston face is dead storage.
    """

    cons: np.ndarray
    n_active: int
    dx: float
    gamma: float = 1.4

    def __post_init__(self):
        cons = np.ascontiguousarray(np.asarray(self.cons, dtype=float))
        if cons.ndim != 2 or cons.shape[1] != 3:
            raise ValidationError(f"cons must be (n_cells, 3), got {cons.shape}")
        n_active = int(self.n_active)
        if not 3 <= n_active <= cons.shape[0]:
            raise ValidationError(
                f"n_active must lie in [3, {cons.shape[0]}], got {n_active}"
            )
        as_positive_float(self.dx, "dx")
        as_positive_float(self.gamma, "gamma")
        object.__setattr__(self, "cons", cons)
        object.__setattr__(self, "n_active", n_active)

    @property
    def n_cells(self) -> int:
        return self.cons.shape[0]

    @property
    def x_max(self) -> float:
        return self.n_cells * self.dx

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def active(self) -> np.ndarray:
        mask = np.zeros(self.n_cells, dtype=bool)
        mask[: self.n_active] = True
        return mask

    def primitives(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(rho, v, p) over the active block."""
        block = self.cons[: self.n_active]
        rho = block[:, 0]
        v = block[:, 1] / rho
        p = (self.gamma - 1.0) * (block[:, 2] - 0.5 * block[:, 1] * v)
        return rho.copy(), v, p

    def total_mass(self, start: int = 0, stop: int | None = None) -> float:
        """Mass of cells [start, stop) of the active block, for ledger checks."""
        stop = self.n_active if stop is None else stop
        return float(self.cons[start:stop, 0].sum() * self.dx)

    @classmethod
    def uniform(
        cls,
        rho: float,
        v: float,
        p: float,
        x_p: float,
        n_cells: int = 400,
        x_max: float = 2.0,
        gamma: float = 1.4,
    ) -> "FluidState1D":
        """Uniform gas between the left wall and a piston face at ``x_p``."""
        as_positive_float(rho, "rho")
        as_positive_float(p, "p")
        n_cells = as_positive_int(n_cells, "n_cells")
        dx = x_max / n_cells
        n_active = _active_count(x_p, dx, n_cells)
        if not 3 <= n_active <= n_cells:
            raise ValidationError(
                f"x_p={x_p} puts the piston outside the usable grid [3 dx, x_max]"
            )
        cons = np.zeros((n_cells, 3))
        energy = p / (gamma - 1.0) + 0.5 * rho * v * v
        cons[:n_active, 0] = rho
        cons[:n_active, 1] = rho * v
        cons[:n_active, 2] = energy
        return cls(cons=cons, n_active=n_active, dx=dx, gamma=gamma)


@dataclass(frozen=True)
class PistonState:
    """Piston displacement state and its mechanical parameters."""

    u: float = 0.0
    u_dot: float = 0.0
    m_s: float = 1.0
    c_s: float = 0.5
    k_s: float = 2.0

    def __post_init__(self):
        as_positive_float(self.m_s, "m_s")
        as_nonnegative_float(self.c_s, "c_s")
        as_nonnegative_float(self.k_s, "k_s")
        if not (np.isfinite(self.u) and np.isfinite(self.u_dot)):
            raise ValidationError("u and u_dot must be finite")

    @property
    def x_p(self) -> float:
        return X_P_REF - self.u


@dataclass(frozen=True)
class PistonScenario:
    """Defaults of the coupled problem; theta overrides pieces of it."""

    rho0: float = 1.225
    v0: float = 0.0
    p0: float = 2.0
    m_s: float = 1.0
    c_s: float = 0.5
    k_s: float = 2.0
    n_cells: int = 400
    x_max: float = 2.0
    dt: float = 1e-3
    t_final: float = 1.0
    obs_interval: float = 1e-2
    gamma: float = 1.4

    def __post_init__(self):
        as_positive_float(self.dt, "dt")
        as_positive_float(self.t_final, "t_final")
        as_positive_float(self.obs_interval, "obs_interval")
        steps_per_obs = self.obs_interval / self.dt
        if abs(steps_per_obs - round(steps_per_obs)) > 1e-9:
            raise ValidationError("obs_interval must be an integer multiple of dt")
        n_steps = self.t_final / self.dt
        if abs(n_steps - round(n_steps)) > 1e-9:
            raise ValidationError("t_final must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.dt)

    @property
    def obs_every(self) -> int:
        return round(self.obs_interval / self.dt)

    @property
    def n_obs(self) -> int:
        return self.n_steps // self.obs_every

    @property
    def obs_times(self) -> np.ndarray:
        return (np.arange(self.n_obs) + 1) * self.obs_interval

    def initial_fluid(self) -> FluidState1D:
        return FluidState1D.uniform(
            self.rho0,
            self.v0,
            self.p0,
            X_P_REF,
            n_cells=self.n_cells,
            x_max=self.x_max,
            gamma=self.gamma,
        )

    def initial_piston(self) -> PistonState:
        return PistonState(u=0.0, u_dot=0.0, m_s=self.m_s, c_s=self.c_s, k_s=self.k_s)


@njit(cache=True, nogil=True)
def _midpoint(u, v, m, c, k, f, dt):
    """Implicit midpoint step of m u'' + c u' + k u = f, closed form."""
    denom = m + 0.5 * c * dt + 0.25 * k * dt * dt
    v_new = ((m - 0.5 * c * dt - 0.25 * k * dt * dt) * v + dt * (f - k * u)) / denom
    u_new = u + 0.5 * dt * (v + v_new)
    return u_new, v_new


@njit(cache=True, nogil=True)
def _coupled_step(cons, n_active, u, v, m_s, c_s, k_s, gamma, dx, dt, n_cells, face_eps):
    """One staggered step; cons is updated in place.

    Returns (status, n_active, u, v, interface pressure, max signal).
    """
    gm1 = gamma - 1.0
    v_wall = -v  # lab-frame face velocity, x_p = X_P_REF - u
    u_half = u + 0.5 * dt * v
    x_p = 1.0 - u_half  # X_P_REF
    n_new = int(np.floor(x_p / dx + face_eps))
    if n_new < 3 or n_new > n_cells:
        return STATUS_DOMAIN, n_active, u, v, 0.0, 0.0

    if n_new > n_active:
        # face crossed rightward: uncovered cells start from the exact
        # interface state behind the moving wall
        r0 = cons[n_active - 1, 0]
        if r0 <= 0.0:
            return STATUS_NEGATIVE_STATE, n_active, u, v, 0.0, 0.0
        v0 = cons[n_active - 1, 1] / r0
        p0 = gm1 * (cons[n_active - 1, 2] - 0.5 * cons[n_active - 1, 1] * v0)
        if p0 <= 0.0:
            return STATUS_NEGATIVE_STATE, n_active, u, v, 0.0, 0.0
        status, rho_s, p_s = _wall_riemann(r0, v0, p0, v_wall, gamma)
        if status != STATUS_OK:
            return status, n_active, u, v, 0.0, 0.0
        energy_s = p_s / gm1 + 0.5 * rho_s * v_wall * v_wall
        for i in range(n_active, n_new):
            cons[i, 0] = rho_s
            cons[i, 1] = rho_s * v_wall
            cons[i, 2] = energy_s
    n_active = n_new

    status, p_int, sig, _ = _rk2(cons, n_active, v_wall, gamma, dx, dt)
    if status != STATUS_OK:
        return status, n_active, u, v, p_int, sig

    u_new, v_new = _midpoint(u, v, m_s, c_s, k_s, -p_int, dt)
    return STATUS_OK, n_active, u_new, v_new, p_int, sig


@njit(cache=True, nogil=True)
def _simulate(cons, n_active, u, v, m_s, c_s, k_s, gamma, dx, dt, n_cells, n_steps, obs_every):
    """Full coupled run; fills observation arrays at every obs_every-th step."""
    n_obs = n_steps // obs_every
    obs_u = np.empty(n_obs)
    obs_p = np.empty(n_obs)
    min_p = np.inf
    k_obs = 0
    for step in range(n_steps):
        status, n_active, u, v, p_int, _ = _coupled_step(
            cons, n_active, u, v, m_s, c_s, k_s, gamma, dx, dt, n_cells, _FACE_EPS
        )
        if status != STATUS_OK:
            return status, step, n_active, u, v, obs_u, obs_p, min_p
        if p_int < min_p:
            min_p = p_int
        if (step + 1) % obs_every == 0:
            obs_u[k_obs] = u
            obs_p[k_obs] = p_int
            k_obs += 1
    return STATUS_OK, n_steps, n_active, u, v, obs_u, obs_p, min_p


@dataclass(frozen=True)
class FluidStepDiagnostics:
    """Byproducts of one fluid step, for coupling and conservation ledgers."""

    interface_pressure: float
    max_signal: float
    effective_flux: np.ndarray


def structure_step_midpoint(piston: PistonState, f_ext: float, dt: float) -> PistonState:
    """Advance the piston ODE by one implicit-midpoint step under load ``f_ext``.

    The step is the exact solution of the 2x2 midpoint system, so it is
    symplectic for the undamped problem and unconditionally stable for any
    spring stiffness.
    """
    as_positive_float(dt, "dt")
    f_ext = float(f_ext)
    if not np.isfinite(f_ext):
        raise ValidationError("f_ext must be finite")
    u_new, v_new = _midpoint(
        piston.u, piston.u_dot, piston.m_s, piston.c_s, piston.k_s, f_ext, dt
    )
    return replace(piston, u=float(u_new), u_dot=float(v_new))


def fluid_step_rk2(
    fluid: FluidState1D,
    dt: float,
    wall_velocity: float = 0.0,
) -> tuple[FluidState1D, FluidStepDiagnostics]:
    """One RK2 step of the gas with the piston face moving at ``wall_velocity``.

    Returns the new fluid state and diagnostics carrying the effective
    interface pressure (the stage average handed to the structure) and the
    effective face fluxes (cons_new = cons - dt/dx * diff(flux) exactly).
    """
    as_positive_float(dt, "dt")
    cons = fluid.cons.copy()
    status, p_int, sig, flux = _rk2(
        cons, fluid.n_active, float(wall_velocity), fluid.gamma, fluid.dx, dt
    )
    if status != STATUS_OK:
        raise FluidSolverError(status, f"fluid_step_rk2 with wall velocity {wall_velocity}")
    new_fluid = FluidState1D(cons=cons, n_active=fluid.n_active, dx=fluid.dx, gamma=fluid.gamma)
    return new_fluid, FluidStepDiagnostics(
        interface_pressure=float(p_int), max_signal=float(sig), effective_flux=flux
    )


@dataclass(frozen=True)
class CoupledStepDiagnostics:
    interface_pressure: float
    max_signal: float
    n_active: int


def coupled_advance(
    fluid: FluidState1D,
    piston: PistonState,
    dt: float,
) -> tuple[FluidState1D, PistonState, CoupledStepDiagnostics]:
    """One staggered step of the coupled system (see module docstring).

    Functional: returns new states, inputs untouched. The piston position
    implied by the updated displacement must stay inside the grid with at
    least 3 active cells, otherwise the step fails.
    """
    as_positive_float(dt, "dt")
    cons = fluid.cons.copy()
    status, n_active, u, v, p_int, sig = _coupled_step(
        cons,
        fluid.n_active,
        piston.u,
        piston.u_dot,
        piston.m_s,
        piston.c_s,
        piston.k_s,
        fluid.gamma,
        fluid.dx,
        dt,
        fluid.n_cells,
        _FACE_EPS,
    )
    if status != STATUS_OK:
        raise FluidSolverError(status, f"coupled_advance at u={piston.u:.6g}")
    new_fluid = FluidState1D(cons=cons, n_active=n_active, dx=fluid.dx, gamma=fluid.gamma)
    new_piston = replace(piston, u=float(u), u_dot=float(v))
    return new_fluid, new_piston, CoupledStepDiagnostics(
        interface_pressure=float(p_int), max_signal=float(sig), n_active=int(n_active)
    )


@dataclass(frozen=True)
class PistonTrace:
    """Result of a full coupled run."""

    times: np.ndarray
    displacement: np.ndarray
    interface_pressure: np.ndarray
    min_interface_pressure: float
    fluid: FluidState1D
    piston: PistonState
    scenario: PistonScenario


def _apply_theta(scenario: PistonScenario, theta: np.ndarray) -> PistonScenario:
    """theta = (c_s, k_s) or (c_s, k_s, p0); entries must be positive."""
    if theta.size not in (2, 3):
        raise ForwardModelError(theta, "theta must have 2 or 3 entries (c_s, k_s[, p0])")
    if np.any(theta <= 0.0):
        raise ForwardModelError(theta, "physical parameters must be positive")
    updates = {"c_s": float(theta[0]), "k_s": float(theta[1])}
    if theta.size == 3:
        updates["p0"] = float(theta[2])
    return replace(scenario, **updates)


def simulate_piston(theta=None, scenario: PistonScenario | None = None) -> PistonTrace:
    """Run the coupled problem for ``theta`` = (c_s, k_s) or (c_s, k_s, p0).

    ``theta`` = None runs the scenario exactly as given; this is the
    forward-simulation path, where a zero damping coefficient is legal
    (calibration parameters must stay positive).

    Observations are the piston displacement at the end of every
    observation interval. The whole loop runs inside one compiled kernel;
    stepping the same states through :func:`coupled_advance` reproduces it
    bit for bit.
    """
    scenario = scenario or PistonScenario()
    if theta is None:
        theta = np.array([scenario.c_s, scenario.k_s])
    else:
        theta = as_float_vector(theta, "theta")
        scenario = _apply_theta(scenario, theta)

    fluid = scenario.initial_fluid()
    piston = scenario.initial_piston()
    cons = fluid.cons.copy()
    status, last_step, n_active, u, v, obs_u, obs_p, min_p = _simulate(
        cons,
        fluid.n_active,
        piston.u,
        piston.u_dot,
        piston.m_s,
        piston.c_s,
        piston.k_s,
        scenario.gamma,
        fluid.dx,
        scenario.dt,
        scenario.n_cells,
        scenario.n_steps,
        scenario.obs_every,
    )
    if status != STATUS_OK:
        raise FluidSolverError(
            status, f"step {last_step} of {scenario.n_steps}, theta={theta.tolist()}"
        )
    final_fluid = FluidState1D(cons=cons, n_active=n_active, dx=fluid.dx, gamma=fluid.gamma)
    final_piston = replace(piston, u=float(u), u_dot=float(v))
    return PistonTrace(
        times=scenario.obs_times,
        displacement=obs_u,
        interface_pressure=obs_p,
        min_interface_pressure=float(min_p),
        fluid=final_fluid,
        piston=final_piston,
        scenario=scenario,
    )


def synthesize_observations(values: np.ndarray, noise_std: float, seed: int) -> np.ndarray:
    """Add seeded N(0, noise_std^2) noise to a clean observation vector.

    noise_std = 0 returns the values unchanged. The draw comes from the
    library's Philox generator, so the synthetic data for a given seed is
    identical everywhere.
    """
    clean = as_float_vector(values, "values")
    noise_std = as_nonnegative_float(noise_std, "noise_std")
    if noise_std == 0.0:
        return clean.copy()
    rng = philox_generator(seed)
    return clean + noise_std * rng.standard_normal(clean.size)


class PistonModel(ForwardModel):
    """Forward model: theta -> piston displacement trace.

    ``n_params`` = 2 infers (c_s, k_s); 3 adds the initial gas pressure.
    Solver failures (including nonpositive parameters) surface as
    ForwardModelError carrying theta. Evaluations only touch local state
    and compiled kernels that release the GIL, so concurrent calls are
    safe and actually run in parallel.
    """

    parallel_safe = True

    def __init__(self, n_params: int = 2, scenario: PistonScenario | None = None):
        if n_params not in (2, 3):
            raise ValidationError(f"n_params must be 2 or 3, got {n_params}")
        self.scenario = scenario or PistonScenario()
        self.n_theta = n_params
        self.n_y = self.scenario.n_obs

    def evaluate(self, theta) -> np.ndarray:
        t = self._check_theta(theta)
        try:
            return simulate_piston(t, self.scenario).displacement
        except ForwardModelError:
            raise
        except KalibrError as exc:
            raise ForwardModelError(t, str(exc)) from exc
