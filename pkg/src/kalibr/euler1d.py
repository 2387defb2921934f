"""Finite-volume solver for the 1d compressible Euler equations.

Perfect gas, conservative variables (rho, rho v, rho E). Interior fluxes
are Roe's approximate Riemann solver with a Harten entropy fix; cell
states are reconstructed piecewise-linearly in primitive variables with a
minmod limiter, dropping to first order in the cells adjacent to either
wall. Time stepping is two-stage RK2 (Heun).

The solver runs on a fixed grid whose active cells form one contiguous
block: a stationary reflecting wall on the left, and on the right an
impermeable wall (the piston face) that may move. Both wall fluxes come
from the exact one-sided Riemann problem against a moving wall, so the
contact condition v* = wall velocity holds exactly, not approximately.

Hot loops are numba kernels with status-code error reporting; the Python
wrappers convert statuses to exceptions. All kernels release the GIL so
batched forward runs scale on a thread pool.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import KalibrError
from .validation import as_float_vector

__all__ = [
    "FluidSolverError",
    "roe_flux",
    "muscl_reconstruct",
    "exact_fs_riemann",
]

# Status codes shared by all kernels. Python wrappers turn them into
# FluidSolverError with these messages.
STATUS_OK = 0
STATUS_NEGATIVE_STATE = 1
STATUS_VACUUM = 2
STATUS_CFL = 3
STATUS_DOMAIN = 4

STATUS_MESSAGES = {
    STATUS_NEGATIVE_STATE: "negative density or pressure in an active cell",
    STATUS_VACUUM: "vacuum at the moving wall: recession speed reached the escape speed",
    STATUS_CFL: "CFL condition violated: wave crossed more than one cell per step",
    STATUS_DOMAIN: "piston position left the grid extent (or fewer than 3 active cells)",
}


class FluidSolverError(KalibrError):
    """Fluid step failure, built from a kernel status code."""

    def __init__(self, status: int, context: str = ""):
        self.status = status
        message = STATUS_MESSAGES.get(status, f"unknown solver status {status}")
        if context:
            message = f"{message} ({context})"
        super().__init__(message)


@njit(cache=True, nogil=True)
def _minmod(a, b):
    if a > 0.0 and b > 0.0:
        return min(a, b)
    if a < 0.0 and b < 0.0:
        return max(a, b)
    return 0.0


@njit(cache=True, nogil=True)
def _wall_riemann(rho, v, p, v_wall, gamma):
    """Exact one-sided Riemann problem: fluid on the left, wall on the right.

    The wall moves at v_wall along the axis pointing from fluid to wall.
    Returns (status, rho_star, p_star); the star velocity is v_wall by
    construction. A receding wall opens an isentropic rarefaction; an
    advancing wall drives a shock whose jump condition reduces to a
    quadratic in the star pressure, so no iteration is needed.
    """
    c = np.sqrt(gamma * p / rho)
    dv = v_wall - v
    if dv == 0.0:
        # no wave: the input state already satisfies the wall condition
        return STATUS_OK, rho, p
    if dv > 0.0:
        # rarefaction branch; vacuum appears at the escape speed 2c/(gamma-1)
        limit = 2.0 * c / (gamma - 1.0)
        if dv >= limit:
            return STATUS_VACUUM, 0.0, 0.0
        c_star = c - 0.5 * (gamma - 1.0) * dv
        p_star = p * (c_star / c) ** (2.0 * gamma / (gamma - 1.0))
        rho_star = gamma * p_star / (c_star * c_star)
        if not (rho_star > 0.0 and p_star > 0.0 and np.isfinite(rho_star + p_star)):
            return STATUS_VACUUM, 0.0, 0.0
        return STATUS_OK, rho_star, p_star
    # shock branch: (p* - p) sqrt(A / (p* + B)) = -dv, quadratic in p*.
    # The discriminant b^2 - 4Ac equals dv^2 (4A(p + B) + dv^2) exactly;
    # the factored form must be used because the expanded one cancels
    # catastrophically for |dv| -> 0 and can go negative in floats.
    big_a = 2.0 / ((gamma + 1.0) * rho)
    big_b = p * (gamma - 1.0) / (gamma + 1.0)
    dv2 = dv * dv
    b_coef = 2.0 * big_a * p + dv2
    root = -dv * np.sqrt(4.0 * big_a * (p + big_b) + dv2)
    p_star = (b_coef + root) / (2.0 * big_a)
    mu = (gamma - 1.0) / (gamma + 1.0)
    ratio = p_star / p
    rho_star = rho * (ratio + mu) / (mu * ratio + 1.0)
    if not (rho_star > 0.0 and p_star > 0.0 and np.isfinite(rho_star + p_star)):
        return STATUS_NEGATIVE_STATE, 0.0, 0.0
    return STATUS_OK, rho_star, p_star


@njit(cache=True, nogil=True)
def _roe_flux(rl, vl, pl, rr, vr, pr, gamma):
    """Roe flux between two primitive states; returns (f0, f1, f2, max speed)."""
    gm1 = gamma - 1.0
    el = pl / (gm1 * rl)
    er = pr / (gm1 * rr)
    energy_l = rl * el + 0.5 * rl * vl * vl
    energy_r = rr * er + 0.5 * rr * vr * vr
    hl = (energy_l + pl) / rl
    hr = (energy_r + pr) / rr

    sl = np.sqrt(rl)
    sr = np.sqrt(rr)
    inv = 1.0 / (sl + sr)
    u = (sl * vl + sr * vr) * inv
    h = (sl * hl + sr * hr) * inv
    a = np.sqrt(gm1 * (h - 0.5 * u * u))

    du1 = rr - rl
    du2 = rr * vr - rl * vl
    du3 = energy_r - energy_l

    alpha2 = gm1 / (a * a) * (du1 * (h - u * u) + u * du2 - du3)
    alpha1 = 0.5 / a * (du1 * (u + a) - du2 - a * alpha2)
    alpha3 = du1 - alpha1 - alpha2

    lam1 = u - a
    lam2 = u
    lam3 = u + a
    smax = abs(u) + a

    # Harten entropy fix tied to the fastest local speed
    delta = 0.05 * smax
    q1 = abs(lam1)
    if q1 < delta:
        q1 = 0.5 * (lam1 * lam1 / delta + delta)
    q2 = abs(lam2)
    if q2 < delta:
        q2 = 0.5 * (lam2 * lam2 / delta + delta)
    q3 = abs(lam3)
    if q3 < delta:
        q3 = 0.5 * (lam3 * lam3 / delta + delta)

    fl0 = rl * vl
    fl1 = rl * vl * vl + pl
    fl2 = (energy_l + pl) * vl
    fr0 = rr * vr
    fr1 = rr * vr * vr + pr
    fr2 = (energy_r + pr) * vr

    d0 = q1 * alpha1 + q2 * alpha2 + q3 * alpha3
    d1 = q1 * alpha1 * lam1 + q2 * alpha2 * u + q3 * alpha3 * lam3
    d2 = (
        q1 * alpha1 * (h - u * a)
        + q2 * alpha2 * 0.5 * u * u
        + q3 * alpha3 * (h + u * a)
    )

    f0 = 0.5 * (fl0 + fr0) - 0.5 * d0
    f1 = 0.5 * (fl1 + fr1) - 0.5 * d1
    f2 = 0.5 * (fl2 + fr2) - 0.5 * d2
    return f0, f1, f2, smax


@njit(cache=True, nogil=True)
def _muscl_faces(rho, vel, pre):
    """Limited face states for the interior faces of the active block.

    Returns (left, right), each (n-1, 3) in primitive variables. Slopes in
    the first and last cells are zero: the wall and interface cells stay
    first order. Reconstructed states that lose positivity fall back to
    the cell average.
    """
    n = rho.shape[0]
    left = np.empty((n - 1, 3))
    right = np.empty((n - 1, 3))
    s_rho = np.zeros(n)
    s_vel = np.zeros(n)
    s_pre = np.zeros(n)
    for i in range(1, n - 1):
        s_rho[i] = _minmod(rho[i] - rho[i - 1], rho[i + 1] - rho[i])
        s_vel[i] = _minmod(vel[i] - vel[i - 1], vel[i + 1] - vel[i])
        s_pre[i] = _minmod(pre[i] - pre[i - 1], pre[i + 1] - pre[i])
    for f in range(n - 1):
        i = f
        j = f + 1
        rl = rho[i] + 0.5 * s_rho[i]
        vl = vel[i] + 0.5 * s_vel[i]
        pl = pre[i] + 0.5 * s_pre[i]
        if rl <= 0.0 or pl <= 0.0:
            rl = rho[i]
            vl = vel[i]
            pl = pre[i]
        rr = rho[j] - 0.5 * s_rho[j]
        vr = vel[j] - 0.5 * s_vel[j]
        pr = pre[j] - 0.5 * s_pre[j]
        if rr <= 0.0 or pr <= 0.0:
            rr = rho[j]
            vr = vel[j]
            pr = pre[j]
        left[f, 0] = rl
        left[f, 1] = vl
        left[f, 2] = pl
        right[f, 0] = rr
        right[f, 1] = vr
        right[f, 2] = pr
    return left, right


@njit(cache=True, nogil=True)
def _residual(cons, n_active, v_wall, gamma, flux):
    """Fill flux[0..n_active] and report (status, interface pressure, max speed).

    flux[f] is the flux through the face left of cell f; flux[n_active] is
    the moving-wall face.
    """
    gm1 = gamma - 1.0
    n = n_active
    rho = np.empty(n)
    vel = np.empty(n)
    pre = np.empty(n)
    for i in range(n):
        r = cons[i, 0]
        if r <= 0.0:
            return STATUS_NEGATIVE_STATE, 0.0, 0.0
        v = cons[i, 1] / r
        p = gm1 * (cons[i, 2] - 0.5 * cons[i, 1] * v)
        if p <= 0.0:
            return STATUS_NEGATIVE_STATE, 0.0, 0.0
        rho[i] = r
        vel[i] = v
        pre[i] = p

    # left wall: stationary, outward normal -x, so the fluid approaches
    # the wall with speed -vel[0]
    status, _, p_wall = _wall_riemann(rho[0], -vel[0], pre[0], 0.0, gamma)
    if status != STATUS_OK:
        return status, 0.0, 0.0
    flux[0, 0] = 0.0
    flux[0, 1] = p_wall
    flux[0, 2] = 0.0

    left, right = _muscl_faces(rho, vel, pre)
    max_sig = 0.0
    for f in range(1, n):
        f0, f1, f2, sm = _roe_flux(
            left[f - 1, 0],
            left[f - 1, 1],
            left[f - 1, 2],
            right[f - 1, 0],
            right[f - 1, 1],
            right[f - 1, 2],
            gamma,
        )
        flux[f, 0] = f0
        flux[f, 1] = f1
        flux[f, 2] = f2
        if sm > max_sig:
            max_sig = sm

    # moving wall (piston face): first order from the last active cell
    status, rho_s, p_s = _wall_riemann(rho[n - 1], vel[n - 1], pre[n - 1], v_wall, gamma)
    if status != STATUS_OK:
        return status, 0.0, 0.0
    energy_s = p_s / gm1 + 0.5 * rho_s * v_wall * v_wall
    flux[n, 0] = rho_s * v_wall
    flux[n, 1] = rho_s * v_wall * v_wall + p_s
    flux[n, 2] = (energy_s + p_s) * v_wall
    c_s = np.sqrt(gamma * max(p_s, 1e-300) / max(rho_s, 1e-300))
    sig = abs(v_wall) + c_s
    if sig > max_sig:
        max_sig = sig
    return STATUS_OK, p_s, max_sig


@njit(cache=True, nogil=True)
def _rk2(cons, n_active, v_wall, gamma, dx, dt):
    """Two-stage RK2 update of the active block, in place.

    Returns (status, effective interface pressure, max signal speed,
    effective face fluxes). The effective flux is the stage average, so
    cons_new = cons - dt/dx * diff(eff_flux) holds exactly.
    """
    n = n_active
    flux1 = np.empty((n + 1, 3))
    flux2 = np.empty((n + 1, 3))
    status, p1, sig1 = _residual(cons, n, v_wall, gamma, flux1)
    if status != STATUS_OK:
        return status, 0.0, 0.0, flux1
    if sig1 * dt / dx > 1.0:
        return STATUS_CFL, p1, sig1, flux1

    lam = dt / dx
    stage = np.empty((n, 3))
    for i in range(n):
        for k in range(3):
            stage[i, k] = cons[i, k] - lam * (flux1[i + 1, k] - flux1[i, k])

    status, p2, sig2 = _residual(stage, n, v_wall, gamma, flux2)
    if status != STATUS_OK:
        return status, p1, sig1, flux1
    if sig2 * dt / dx > 1.0:
        return STATUS_CFL, p2, sig2, flux2

    for i in range(n):
        for k in range(3):
            w2 = stage[i, k] - lam * (flux2[i + 1, k] - flux2[i, k])
            cons[i, k] = 0.5 * (cons[i, k] + w2)
    for f in range(n + 1):
        for k in range(3):
            flux1[f, k] = 0.5 * (flux1[f, k] + flux2[f, k])

    p_eff = 0.5 * (p1 + p2)
    sig = max(sig1, sig2)
    return STATUS_OK, p_eff, sig, flux1


def roe_flux(left_state, right_state, gamma: float = 1.4) -> np.ndarray:
    """Roe numerical flux between two primitive states (rho, v, p).

    Consistent: coincident states return the exact physical flux.
    """
    wl = as_float_vector(left_state, "left_state")
    wr = as_float_vector(right_state, "right_state")
    if wl.size != 3 or wr.size != 3:
        raise KalibrError("states must be (rho, v, p) triples")
    if wl[0] <= 0.0 or wl[2] <= 0.0 or wr[0] <= 0.0 or wr[2] <= 0.0:
        raise FluidSolverError(STATUS_NEGATIVE_STATE, "roe_flux input")
    f0, f1, f2, _ = _roe_flux(wl[0], wl[1], wl[2], wr[0], wr[1], wr[2], float(gamma))
    return np.array([f0, f1, f2])


def muscl_reconstruct(prims: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Limited face states for a contiguous block of primitive cell states.

    ``prims`` is (n, 3) with columns (rho, v, p), n >= 3. Returns the
    (left, right) face states at the n-1 interior faces.
    """
    arr = np.asarray(prims, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise KalibrError(f"prims must be (n, 3), got {arr.shape}")
    if arr.shape[0] < 3:
        raise KalibrError("reconstruction needs at least 3 cells")
    return _muscl_faces(
        np.ascontiguousarray(arr[:, 0]),
        np.ascontiguousarray(arr[:, 1]),
        np.ascontiguousarray(arr[:, 2]),
    )


def exact_fs_riemann(
    fluid_state,
    wall_velocity: float,
    gamma: float = 1.4,
) -> tuple[float, float, float]:
    """Exact interface state against an impermeable moving wall.

    ``fluid_state`` is the (rho, v, p) of the fluid adjacent to the wall,
    with velocities along the axis pointing from fluid to wall. Returns
    (rho*, v*, p*) where v* equals ``wall_velocity`` exactly.

    Raises
    ------
    FluidSolverError
        If the wall recedes at or beyond the escape speed 2c/(gamma-1),
        where the gas cannot follow and a vacuum opens.
    """
    w = as_float_vector(fluid_state, "fluid_state")
    if w.size != 3:
        raise KalibrError("fluid_state must be a (rho, v, p) triple")
    if w[0] <= 0.0 or w[2] <= 0.0:
        raise FluidSolverError(STATUS_NEGATIVE_STATE, "exact_fs_riemann input")
    status, rho_s, p_s = _wall_riemann(w[0], w[1], w[2], float(wall_velocity), float(gamma))
    if status != STATUS_OK:
        raise FluidSolverError(status, f"wall velocity {wall_velocity}")
    return float(rho_s), float(wall_velocity), float(p_s)
