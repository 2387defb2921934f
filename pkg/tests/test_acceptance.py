"""End-to-end acceptance checks.

Each criterion owns one test and prints exactly one line,
``criterion N: PASS/FAIL - detail``, so running

    pytest tests/test_acceptance.py -v -s

produces a checklist. Criterion 6 runs here as a reduced-budget smoke
gate; the full-budget variant is marked slow and excluded from the
default run (``pytest -m slow tests/test_acceptance.py`` executes it).
"""

import json
import time

import numpy as np
import pytest
from scipy.optimize import brentq

from kalibr.cli import main as cli_main
from kalibr.estimators import FiniteDifferenceQuasiNewton, UnscentedKalmanInversion
from kalibr.euler1d import exact_fs_riemann
from kalibr.forward_models import LinearModel, ToyModel
from kalibr.gaussian_core import GaussianState
from kalibr.inversion import InverseProblem, uki_run
from kalibr.mcmc import ChainConfig, posterior_stats, rwm_sample
from kalibr.damage import (
    damage_omega,
    kl_eigenvalue,
    kl_mode,
    synthetic_field_inversion,
)
from kalibr.piston import FluidState1D, fluid_step_rk2
from kalibr.problems import build_problem

from oracles import SOD_LEFT, SOD_RIGHT, normal_equations_solution, sod_profile, wall_star

GAMMA = 1.4


def _report(criterion: int, ok: bool, detail: str) -> None:
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="module", autouse=True)
def _warm_kernels():
    # pay the one-time native compilation outside any timed window
    fluid = FluidState1D.uniform(1.225, 0.0, 2.0, x_p=1.0, n_cells=20, x_max=2.0)
    fluid_step_rk2(fluid, 1e-3, wall_velocity=0.0)


@pytest.fixture(scope="module")
def piston2_fit():
    bundle = build_problem("piston2")
    start = time.perf_counter()
    est = UnscentedKalmanInversion(
        bundle.problem.forward,
        bundle.problem.sigma_eta,
        bundle.init_mean,
        bundle.init_cov,
        n_iterations=bundle.n_iterations,
        tol=0.0,
    ).fit(bundle.problem.y)
    return bundle, est, time.perf_counter() - start


@pytest.fixture(scope="module")
def piston3_fit():
    bundle = build_problem("piston3")
    start = time.perf_counter()
    est = UnscentedKalmanInversion(
        bundle.problem.forward,
        bundle.problem.sigma_eta,
        bundle.init_mean,
        bundle.init_cov,
        n_iterations=bundle.n_iterations,
        tol=0.0,
    ).fit(bundle.problem.y)
    return bundle, est, time.perf_counter() - start


def test_criterion_1_nonconvex_toy():
    start = time.perf_counter()
    problem = InverseProblem(ToyModel(), np.zeros(1), np.eye(1))
    g = lambda t: np.sin(5.0 * t) + t
    roots = np.array(
        [brentq(g, *bracket) for bracket in
         [(-1.05, -0.9), (-0.9, -0.7), (-0.1, 0.1), (0.7, 0.9), (0.9, 1.05)]]
    )

    uki_finals, fd_finals = [], []
    for m0 in (10.0, 11.0, 12.0):
        trace = uki_run(
            problem, GaussianState(np.array([m0]), np.eye(1)), n_max=30, tol=0.0
        )
        uki_finals.append(float(trace.last.state.mean[0]))
        fd = FiniteDifferenceQuasiNewton(
            ToyModel(), np.eye(1), theta0=np.array([m0])
        ).fit(np.zeros(1))
        fd_finals.append(float(fd.theta_[0]))
    elapsed = time.perf_counter() - start

    uki_errs = [np.abs(roots - m).min() for m in uki_finals]
    uki_ok = all(err <= 0.05 for err in uki_errs)
    fd_ok = all(abs(t) > 1.5 for t in fd_finals)
    ok = uki_ok and fd_ok and elapsed < 1.0
    _report(
        1,
        ok,
        f"sigma-point driver lands on a misfit minimum from all three starts "
        f"(worst distance {max(uki_errs):.3g}, tol 0.05); finite-difference "
        f"baseline stays trapped (|theta| = "
        f"{', '.join(f'{abs(t):.3g}' for t in fd_finals)}, all > 1.5); "
        f"{elapsed:.2f}s < 1s",
    )
    assert ok


def test_criterion_2_linear_exactness():
    start = time.perf_counter()
    # scalar identity: the first step and the fixed point are known exactly
    identity = InverseProblem(LinearModel(np.eye(1)), np.ones(1), np.eye(1))
    init = GaussianState(np.zeros(1), np.eye(1))
    trace = uki_run(identity, init, n_max=30, tol=0.0)
    m1 = float(trace.iterations[1].state.mean[0])
    c1 = float(trace.iterations[1].state.cov[0, 0])
    first_ok = abs(m1 - 0.5) <= 1e-12 and abs(c1 - 1.0) <= 1e-12
    cov_ok = all(
        abs(float(rec.state.cov[0, 0]) - 1.0) <= 1e-12 for rec in trace.iterations
    )
    mean_ok = abs(float(trace.last.state.mean[0]) - 1.0) <= 1e-6

    # overdetermined linear system: the mean must solve the normal equations
    design = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    y = np.array([1.0, 0.0, -1.0])
    linear = InverseProblem(LinearModel(design), y, np.eye(3))
    trace_lin = uki_run(
        linear, GaussianState(np.zeros(2), np.eye(2)), n_max=30, tol=0.0
    )
    target = normal_equations_solution(design, y, np.eye(3))
    lin_err = float(np.abs(trace_lin.last.state.mean - target).max())
    elapsed = time.perf_counter() - start

    ok = first_ok and cov_ok and mean_ok and lin_err <= 1e-8 and elapsed < 1.0
    _report(
        2,
        ok,
        f"scalar identity: first step within 1e-12 of (0.5, 1.0), covariance "
        f"pinned at the noise level, mean reaches the data; overdetermined "
        f"linear solve within {lin_err:.3g} of the normal equations "
        f"(tol 1e-8); {elapsed:.2f}s < 1s",
    )
    assert ok


def test_criterion_3_fluid_verification():
    start = time.perf_counter()
    # shock tube at the working resolution
    n_cells = 200
    dx = 1.0 / n_cells
    x = (np.arange(n_cells) + 0.5) * dx
    cons = np.empty((n_cells, 3))
    for state, mask in ((SOD_LEFT, x < 0.5), (SOD_RIGHT, x >= 0.5)):
        rho, v, p = state
        cons[mask] = [rho, rho * v, p / (GAMMA - 1.0) + 0.5 * rho * v * v]
    fluid = FluidState1D(cons=cons, n_active=n_cells, dx=dx)
    for _ in range(200):
        fluid, _ = fluid_step_rk2(fluid, 1e-3, wall_velocity=0.0)
    rho_exact = sod_profile(fluid.centers, 0.2)[0]
    l1 = float(np.abs(fluid.primitives()[0] - rho_exact).sum() * dx)

    # moving-wall star states against the independent iterative solver
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        rho = rng.uniform(0.05, 5.0)
        p = rng.uniform(0.05, 5.0)
        c = np.sqrt(GAMMA * p / rho)
        v = rng.uniform(-0.9, 0.9) * c
        v_wall = v + rng.uniform(-0.9, 0.9) * c
        _, _, ps = exact_fs_riemann((rho, v, p), v_wall)
        _, p_oracle, _ = wall_star(rho, v, p, v_wall)
        worst = max(worst, abs(ps - p_oracle) / p_oracle)
    elapsed = time.perf_counter() - start

    ok = l1 <= 0.02 and worst <= 1e-10 and elapsed < 10.0
    _report(
        3,
        ok,
        f"shock-tube density L1 error {l1:.4f} <= 0.02 at t=0.2; wall star "
        f"pressure agrees with the independent solver to {worst:.2e} relative "
        f"over 1000 random subsonic states (tol 1e-10); {elapsed:.1f}s < 10s",
    )
    assert ok


def test_criterion_4_piston_two_parameter(piston2_fit):
    bundle, est, elapsed = piston2_fit
    sigma = np.sqrt(np.diag(est.cov_))
    err = np.abs(est.mean_ - bundle.theta_ref)
    inside = err <= 2.0 * sigma
    diags = np.array([np.diag(rec.state.cov) for rec in est.trace_.iterations])
    finite = bool(np.isfinite(diags).all())
    shrinking = bool((diags[-1] < diags[0]).all())

    ok = bool(inside.all()) and finite and shrinking and elapsed < 300.0
    _report(
        4,
        ok,
        f"mean ({est.mean_[0]:.4f}, {est.mean_[1]:.4f}) within two posterior "
        f"widths of the generating values (0.5, 2.0): |error|/sigma = "
        f"{', '.join(f'{e / s:.2f}' for e, s in zip(err, sigma))}; widths "
        f"finite and shrink from "
        f"{', '.join(f'{d:.3g}' for d in diags[0])} to "
        f"{', '.join(f'{d:.3g}' for d in diags[-1])}; {elapsed:.1f}s < 300s",
    )
    assert ok


def test_criterion_5_piston_three_parameter(piston2_fit, piston3_fit):
    _, est2, _ = piston2_fit
    bundle3, est3, elapsed = piston3_fit
    sigma3 = np.sqrt(np.diag(est3.cov_))
    err = np.abs(est3.mean_ - bundle3.theta_ref)
    inside = err <= 2.0 * sigma3
    sigma2 = np.sqrt(np.diag(est2.cov_))
    widened = bool((sigma3[:2] >= sigma2).all())

    ok = bool(inside.all()) and widened and elapsed < 300.0
    _report(
        5,
        ok,
        f"three-parameter mean ({', '.join(f'{m:.4f}' for m in est3.mean_)}) "
        f"within two widths of (0.5, 2.0, 2.0); shared-parameter widths grow "
        f"with the extra unknown: "
        f"{', '.join(f'{a:.3g}>={b:.3g}' for a, b in zip(sigma3[:2], sigma2))}; "
        f"{elapsed:.1f}s < 300s",
    )
    assert ok


def _chain_vs_gaussian(piston2_fit, n_samples, burn_in, std_tol, label, limit_s):
    bundle, est, _ = piston2_fit
    start = time.perf_counter()
    result = rwm_sample(
        bundle.problem,
        np.array([1.0, 1.0]),
        ChainConfig(step_size=1e-2, n_samples=n_samples, burn_in=burn_in, seed=0),
    )
    mcmc_mean, mcmc_cov = posterior_stats(result)
    elapsed = time.perf_counter() - start

    mean_rel = np.abs(est.mean_ - mcmc_mean) / np.abs(mcmc_mean)
    std_uki = np.sqrt(np.diag(est.cov_))
    std_mcmc = np.sqrt(np.diag(mcmc_cov))
    # width agreement is measured against the larger of the two, the same
    # symmetric convention the compare subcommand reports; a short smoke
    # chain underestimates its own widths, so it cannot serve as the scale
    std_rel = np.abs(std_uki - std_mcmc) / np.maximum(std_uki, std_mcmc)

    ok = bool((mean_rel <= 0.05).all() and (std_rel <= std_tol).all()) and elapsed < limit_s
    _report(
        6,
        ok,
        f"{label}: Gaussian mean within "
        f"{', '.join(f'{v:.1%}' for v in mean_rel)} of the chain (tol 5%), "
        f"widths within {', '.join(f'{v:.1%}' for v in std_rel)} "
        f"(tol {std_tol:.0%}); chain acceptance {result.acceptance_rate:.2f}; "
        f"{elapsed:.0f}s < {limit_s:.0f}s",
    )
    assert ok


def test_criterion_6_chain_smoke_gate(piston2_fit):
    _chain_vs_gaussian(
        piston2_fit, n_samples=5_000, burn_in=1_000, std_tol=0.50,
        label="smoke budget (5e3 samples)", limit_s=600.0,
    )


@pytest.mark.slow
def test_criterion_6_chain_full_budget(piston2_fit):
    _chain_vs_gaussian(
        piston2_fit, n_samples=50_000, burn_in=10_000, std_tol=0.30,
        label="full budget (5e4 samples)", limit_s=3600.0,
    )


def test_criterion_7_damage_field():
    lam_err = abs(kl_eigenvalue(1) - 1.0 / (np.pi**2 + 4.0))
    y = np.linspace(0.0, 1.0, 1001)
    ortho_err = 0.0
    from scipy.integrate import simpson

    for l in range(1, 11):
        for m in range(l, 11):
            inner = simpson(kl_mode(l, y) * kl_mode(m, y), x=y)
            ortho_err = max(ortho_err, abs(inner - (1.0 if l == m else 0.0)))
    zero_ok = float(damage_omega(0.0)) == 0.0
    grid = damage_omega(np.linspace(-34.0, 34.0, 10001))
    bounds_ok = bool((grid > -0.1).all() and (grid < 0.9).all())

    good_seeds = 0
    drops = []
    for seed in range(10):
        report = synthetic_field_inversion(seed=seed)
        drop = float(report.misfit_history[0] / report.misfit_history[-1])
        drops.append(drop)
        if report.coverage >= 0.8 and drop >= 10.0:
            good_seeds += 1

    ok = (
        lam_err <= 1e-12
        and ortho_err <= 1e-6
        and zero_ok
        and bounds_ok
        and good_seeds >= 8
    )
    _report(
        7,
        ok,
        f"leading eigenvalue within {lam_err:.2e} of 1/(pi^2+4); basis "
        f"orthonormal to {ortho_err:.2e}; zero coefficients give exactly zero "
        f"damage; damage stays inside (-0.1, 0.9); {good_seeds}/10 seeds "
        f"reach 80% envelope coverage with a >=10x misfit drop "
        f"(smallest drop {min(drops):.1f}x)",
    )
    assert ok


def test_criterion_8_spd_and_reproducibility(piston2_fit, tmp_path):
    _, est, _ = piston2_fit
    toy_trace = uki_run(
        InverseProblem(ToyModel(), np.zeros(1), np.eye(1)),
        GaussianState(np.array([10.0]), np.eye(1)),
        n_max=30,
        tol=0.0,
    )
    spd_ok = True
    for rec in list(est.trace_.iterations) + list(toy_trace.iterations):
        try:
            np.linalg.cholesky(rec.state.cov)
        except np.linalg.LinAlgError:
            spd_ok = False

    def run_twice(argv, names):
        outs = []
        for tag in ("first", "second"):
            out = tmp_path / f"{names}_{tag}"
            assert cli_main(argv + ["--output-dir", str(out)]) == 0
            files = {}
            for path in sorted(out.iterdir()):
                if path.name == "summary.json":
                    summary = json.loads(path.read_text())
                    summary.pop("wall_time_s")
                    files[path.name] = json.dumps(summary, sort_keys=True)
                else:
                    files[path.name] = path.read_bytes()
            outs.append(files)
        return outs[0] == outs[1]

    etki_ok = run_twice(
        ["calibrate", "--problem", "toy", "--method", "etki",
         "--n-iterations", "5", "--n-members", "8", "--seed", "11"],
        "etki",
    )
    mcmc_ok = run_twice(
        ["sample", "--problem", "toy", "--theta0", "0.5", "--n-samples", "400",
         "--burn-in", "100", "--step-size", "0.4", "--seed", "7"],
        "mcmc",
    )

    ok = spd_ok and etki_ok and mcmc_ok
    _report(
        8,
        ok,
        f"every Gaussian iterate admits a Cholesky factorization "
        f"(SPD {'held' if spd_ok else 'violated'}); repeated seeded runs "
        f"reproduce artifacts byte for byte aside from wall time "
        f"(ensemble {'ok' if etki_ok else 'DIFFERS'}, "
        f"chain {'ok' if mcmc_ok else 'DIFFERS'})",
    )
    assert ok
