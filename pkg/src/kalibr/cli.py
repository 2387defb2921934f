"""Command-line entry point.

Subcommands: ``simulate`` (piston forward run), ``calibrate`` (any driver
on a named problem), ``sample`` (posterior chain), ``compare`` (two
methods on one problem, report side by side).

Configuration is layered: command-line flags win over values from the
flat key=value config file given with ``--config``; the ``KALIBR_SEED``
environment variable backs the seed when neither supplies one. Unknown
config keys and enum values are rejected at parse time with the
offending key named.

Exit codes: 0 success, 1 configuration error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import artifacts
from .damage import damage_envelope
from .errors import KalibrError
from .estimators import (
    EnsembleTransformKalmanInversion,
    FiniteDifferenceQuasiNewton,
    RandomWalkMetropolis,
    UnscentedKalmanInversion,
)
from .inversion import misfit
from .piston import PistonScenario, simulate_piston
from .problems import DEFAULT_DATA_SEED, PROBLEM_NAMES, ProblemBundle, build_problem

__all__ = ["main", "run_calibration", "CliConfigError"]

METHOD_NAMES = ("uki", "etki", "mcmc", "fd_newton")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2

ENV_SEED = "KALIBR_SEED"


class CliConfigError(Exception):
    """Configuration problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits the process on errors; surface them as config errors
    # instead so main() owns the exit code.
    def error(self, message):
        raise CliConfigError(message)


# every key a config file may define, with its parser
_SCENARIO_KEYS = {
    "rho0": float,
    "v0": float,
    "p0": float,
    "m_s": float,
    "c_s": float,
    "k_s": float,
    "n_cells": int,
    "x_max": float,
    "dt": float,
    "t_final": float,
    "obs_interval": float,
    "gamma": float,
}

_RUN_KEYS = {
    "problem": str,
    "method": str,
    "init_mean": "vector",
    "init_cov_scale": float,
    "theta0": "vector",
    "n_iterations": int,
    "n_members": int,
    "n_samples": int,
    "burn_in": int,
    "step_size": float,
    "seed": int,
    "data_seed": int,
    "jobs": int,
    "output_dir": str,
}

_KNOWN_KEYS = {**_RUN_KEYS, **_SCENARIO_KEYS}


def _convert(key: str, raw: str):
    kind = _KNOWN_KEYS[key]
    try:
        if kind == "vector":
            return np.array([float(part) for part in raw.split(",")])
        return kind(raw)
    except ValueError as exc:
        raise CliConfigError(f"config key '{key}': cannot parse {raw!r}") from exc


def parse_config_file(path) -> dict:
    """Flat key = value text; '#' starts a comment; unknown keys rejected."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliConfigError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise CliConfigError(f"{path}:{lineno}: unknown config key '{key}'")
        values[key] = _convert(key, raw)
    return values


def _resolve(flags: dict, config: dict, key: str, default=None):
    """Precedence: flag, then config file, then default."""
    value = flags.get(key)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _resolve_seed(flags: dict, config: dict) -> int:
    value = _resolve(flags, config, "seed")
    if value is not None:
        return int(value)
    env = os.environ.get(ENV_SEED)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise CliConfigError(f"{ENV_SEED} must be an integer, got {env!r}") from exc
    return 0


def _resolve_enum(flags: dict, config: dict, key: str, allowed, default=None) -> str:
    value = _resolve(flags, config, key, default)
    if value is None:
        raise CliConfigError(f"missing required key '{key}'")
    if value not in allowed:
        raise CliConfigError(
            f"config key '{key}': unknown value {value!r}; choose one of "
            + ", ".join(allowed)
        )
    return value


def _init_vector(value, n_params: int, key: str) -> np.ndarray:
    """Accept a scalar (broadcast) or a full-length comma vector."""
    vec = np.atleast_1d(np.asarray(value, dtype=float))
    if vec.size == 1:
        return np.full(n_params, vec[0])
    if vec.size != n_params:
        raise CliConfigError(
            f"config key '{key}': expected 1 or {n_params} entries, got {vec.size}"
        )
    return vec


def run_calibration(
    bundle: ProblemBundle,
    method: str,
    *,
    init_mean=None,
    init_cov_scale=None,
    theta0=None,
    n_iterations=None,
    n_members=10,
    n_samples=50_000,
    burn_in=10_000,
    step_size=1e-2,
    seed=0,
    jobs=1,
):
    """Fit one method on a problem bundle; returns the fitted estimator.

    This is the programmatic face of ``calibrate``/``sample``; the CLI
    only adds artifact writing around it.
    """
    n = bundle.problem.n_params
    mean0 = (
        bundle.init_mean
        if init_mean is None
        else _init_vector(init_mean, n, "init_mean")
    )
    cov0 = bundle.init_cov if init_cov_scale is None else init_cov_scale * np.eye(n)
    start = bundle.init_mean if theta0 is None else _init_vector(theta0, n, "theta0")
    budget = bundle.n_iterations if n_iterations is None else n_iterations

    model = bundle.problem.forward
    sigma_eta = bundle.problem.sigma_eta
    if method == "uki":
        est = UnscentedKalmanInversion(
            model, sigma_eta, mean0, cov0, n_iterations=budget, tol=0.0, jobs=jobs
        )
    elif method == "etki":
        est = EnsembleTransformKalmanInversion(
            model,
            sigma_eta,
            mean0,
            cov0,
            n_members=n_members,
            n_iterations=budget,
            seed=seed,
            jobs=jobs,
        )
    elif method == "mcmc":
        est = RandomWalkMetropolis(
            model,
            sigma_eta,
            start,
            step_size=step_size,
            n_samples=n_samples,
            burn_in=burn_in,
            seed=seed,
        )
    elif method == "fd_newton":
        # the local optimizer has its own default budget; the bundle's
        # Kalman iteration count is not a sensible cap for it
        fd_budget = 200 if n_iterations is None else n_iterations
        est = FiniteDifferenceQuasiNewton(model, sigma_eta, start, n_iterations=fd_budget)
    else:
        raise CliConfigError(f"unknown method {method!r}")
    return est.fit(bundle.problem.y)


def _summary_dict(bundle, method, est, seed, wall_time) -> dict:
    summary = {
        "format_version": artifacts.SUMMARY_FORMAT_VERSION,
        "problem": bundle.name,
        "method": method,
        "wall_time_s": wall_time,
        "final_mean": np.asarray(est.mean_, dtype=float),
    }
    if method == "uki":
        summary["seed"] = None
        summary["n_iterations"] = est.n_iter_
        summary["final_covariance"] = est.cov_
        summary["phi"] = est.misfit_
    elif method == "etki":
        summary["seed"] = seed
        summary["n_iterations"] = est.n_iter_
        summary["final_covariance"] = est.cov_
        summary["phi"] = est.misfit_
    elif method == "mcmc":
        summary["seed"] = seed
        summary["n_iterations"] = est.n_samples
        summary["final_covariance"] = est.cov_
        summary["phi"] = misfit(bundle.problem, est.predict())
        summary["acceptance_rate"] = est.acceptance_rate_
        summary["n_samples"] = est.n_samples
        summary["burn_in"] = est.burn_in
        summary["step_size"] = est.step_size
    else:  # fd_newton
        summary["seed"] = None
        summary["n_iterations"] = est.n_iter_
        summary["final_covariance"] = None
        summary["phi"] = est.misfit_
        summary["converged"] = est.converged_
        summary["message"] = est.trace_.message
    return summary


def _trace_table(method: str, est):
    """(means, cov_diags, misfits) per iteration, or None for samplers."""
    if method == "uki":
        trace = est.trace_
        return trace.means(), trace.cov_diags(), trace.misfits()
    if method == "etki":
        cov_diags = np.array([np.diag(c) for c in est.cov_history_])
        return est.mean_history_, cov_diags, est.misfit_history_
    return None


def _write_run_artifacts(out_dir: Path, bundle, method, est, summary) -> list[Path]:
    written = [artifacts.write_summary(out_dir / "summary.json", summary)]
    table = _trace_table(method, est)
    if table is not None:
        written.append(artifacts.write_iterates_csv(out_dir / "iterates.csv", *table))
        if method == "uki":
            covs = [it.state.cov for it in est.trace_.iterations]
        else:
            covs = list(est.cov_history_)
        written.append(
            artifacts.write_covariances_json(out_dir / "covariances.json", covs)
        )
    if method == "mcmc":
        written.append(artifacts.write_samples_csv(out_dir / "samples.csv", est.samples_))
    if method == "fd_newton":
        written.append(
            artifacts.write_optimizer_csv(
                out_dir / "iterates.csv",
                est.trace_.iterates,
                est.trace_.objective_values,
            )
        )

    if bundle.scenario is not None:
        trace = simulate_piston(est.mean_, bundle.scenario)
        written.append(
            artifacts.write_displacement_csv(
                out_dir / "displacement.csv", trace.times, trace.displacement
            )
        )
        written.append(
            artifacts.write_fluid_field_csv(out_dir / "fluid_field.csv", trace.fluid)
        )
    if bundle.field is not None and getattr(est, "cov_", None) is not None:
        setup = bundle.field
        est_f, lo, hi = damage_envelope(est.mean_, est.cov_, setup.grid, setup.damage_map)
        written.append(
            artifacts.write_damage_field_csv(
                out_dir / "field.csv", setup.grid, est_f, lo, hi, setup.omega_truth
            )
        )
    return written


def _cmd_run(flags: dict, method_default=None, method_override=None) -> int:
    config = parse_config_file(flags["config"]) if flags.get("config") else {}
    problem = _resolve_enum(flags, config, "problem", PROBLEM_NAMES)
    if method_override is not None:
        method = method_override
    else:
        method = _resolve_enum(flags, config, "method", METHOD_NAMES, method_default)
    seed = _resolve_seed(flags, config)
    data_seed = int(_resolve(flags, config, "data_seed", DEFAULT_DATA_SEED))
    out_dir = Path(_resolve(flags, config, "output_dir", "kalibr_out"))
    jobs = _resolve(flags, config, "jobs", os.cpu_count() or 1)

    bundle = build_problem(problem, data_seed=data_seed)
    start = time.perf_counter()
    est = run_calibration(
        bundle,
        method,
        init_mean=_resolve(flags, config, "init_mean"),
        init_cov_scale=_resolve(flags, config, "init_cov_scale"),
        theta0=_resolve(flags, config, "theta0"),
        n_iterations=_resolve(flags, config, "n_iterations"),
        n_members=int(_resolve(flags, config, "n_members", 10)),
        n_samples=int(_resolve(flags, config, "n_samples", 50_000)),
        burn_in=int(_resolve(flags, config, "burn_in", 10_000)),
        step_size=float(_resolve(flags, config, "step_size", 1e-2)),
        seed=seed,
        jobs=int(jobs),
    )
    wall = time.perf_counter() - start

    summary = _summary_dict(bundle, method, est, seed, wall)
    written = _write_run_artifacts(out_dir, bundle, method, est, summary)
    mean_txt = ", ".join(format(v, ".6g") for v in np.atleast_1d(est.mean_))
    print(f"{problem}/{method}: mean = [{mean_txt}], phi = {summary['phi']:.6g}")
    print(f"wrote {len(written)} file(s) to {out_dir}")
    return EXIT_OK


def _side_config(flags: dict, side: str) -> dict:
    config = {}
    path = flags.get(f"config_{side}")
    if path:
        config = parse_config_file(path)
    return config


def _cmd_compare(flags: dict) -> int:
    config_a = _side_config(flags, "a")
    config_b = _side_config(flags, "b")

    problem_a = _resolve_enum(flags, config_a, "problem", PROBLEM_NAMES)
    problem_b = _resolve_enum(flags, config_b, "problem", PROBLEM_NAMES)
    if problem_a != problem_b:
        raise CliConfigError(
            f"compare needs one problem on both sides, got {problem_a!r} and {problem_b!r}"
        )
    method_a = _resolve_enum(
        {"method": flags.get("method_a")}, config_a, "method", METHOD_NAMES
    )
    method_b = _resolve_enum(
        {"method": flags.get("method_b")}, config_b, "method", METHOD_NAMES
    )
    data_seed = int(_resolve(flags, config_a, "data_seed", DEFAULT_DATA_SEED))
    out_dir = Path(_resolve(flags, config_a, "output_dir", "kalibr_out"))
    bundle = build_problem(problem_a, data_seed=data_seed)

    sides = {}
    for label, method, config in (("a", method_a, config_a), ("b", method_b, config_b)):
        seed = _resolve_seed(flags, config)
        start = time.perf_counter()
        est = run_calibration(
            bundle,
            method,
            init_mean=_resolve(flags, config, "init_mean"),
            init_cov_scale=_resolve(flags, config, "init_cov_scale"),
            theta0=_resolve(flags, config, "theta0"),
            n_iterations=_resolve(flags, config, "n_iterations"),
            n_members=int(_resolve(flags, config, "n_members", 10)),
            n_samples=int(_resolve(flags, config, "n_samples", 50_000)),
            burn_in=int(_resolve(flags, config, "burn_in", 10_000)),
            step_size=float(_resolve(flags, config, "step_size", 1e-2)),
            seed=seed,
            jobs=int(_resolve(flags, config, "jobs", os.cpu_count() or 1)),
        )
        wall = time.perf_counter() - start
        entry = _summary_dict(bundle, method, est, seed, wall)
        table = _trace_table(method, est)
        if table is not None:
            means, cov_diags, misfits = table
            entry["trace"] = {
                "means": means,
                "cov_diags": cov_diags,
                "misfits": misfits,
            }
        sides[label] = (est, entry)

    est_a, entry_a = sides["a"]
    est_b, entry_b = sides["b"]
    mean_a = np.asarray(est_a.mean_, dtype=float)
    mean_b = np.asarray(est_b.mean_, dtype=float)
    abs_diff = np.abs(mean_a - mean_b)
    scale = np.maximum(np.maximum(np.abs(mean_a), np.abs(mean_b)), 1e-300)
    rel_diff = abs_diff / scale

    report = {
        "problem": problem_a,
        "a": entry_a,
        "b": entry_b,
        "discrepancy": {
            "mean_abs_diff": abs_diff,
            "mean_rel_diff": rel_diff,
        },
    }
    cov_a = getattr(est_a, "cov_", None)
    cov_b = getattr(est_b, "cov_", None)
    if cov_a is not None and cov_b is not None:
        std_a = np.sqrt(np.diag(np.asarray(cov_a, dtype=float)))
        std_b = np.sqrt(np.diag(np.asarray(cov_b, dtype=float)))
        std_scale = np.maximum(np.maximum(std_a, std_b), 1e-300)
        report["discrepancy"]["std_rel_diff"] = np.abs(std_a - std_b) / std_scale

    path = artifacts.write_summary(out_dir / "comparison.json", report)
    worst = float(rel_diff.max())
    print(
        f"{problem_a}: {method_a} vs {method_b}, "
        f"max component-wise mean relative difference = {worst:.6g}"
    )
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_simulate(flags: dict) -> int:
    config = parse_config_file(flags["config"]) if flags.get("config") else {}
    kwargs = {}
    for key in _SCENARIO_KEYS:
        value = _resolve(flags, config, key)
        if value is not None:
            kwargs[key] = value
    try:
        scenario = PistonScenario(**kwargs)
    except KalibrError as exc:
        raise CliConfigError(f"invalid scenario: {exc}") from exc
    out_dir = Path(_resolve(flags, config, "output_dir", "kalibr_out"))

    trace = simulate_piston(scenario=scenario)
    written = [
        artifacts.write_displacement_csv(
            out_dir / "displacement.csv", trace.times, trace.displacement
        ),
        artifacts.write_fluid_field_csv(out_dir / "fluid_field.csv", trace.fluid),
    ]
    print(
        f"simulated {scenario.n_steps} steps, final displacement "
        f"{trace.displacement[-1]:.6g}, min interface pressure "
        f"{trace.min_interface_pressure:.6g}"
    )
    print(f"wrote {len(written)} file(s) to {out_dir}")
    return EXIT_OK


def _add_common(parser: _Parser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--output-dir", dest="output_dir", help="artifact directory")
    parser.add_argument("--seed", type=int, help=f"method seed (fallback: ${ENV_SEED})")
    parser.add_argument("--jobs", type=int, help="parallel forward evaluations")
    parser.add_argument(
        "--data-seed", dest="data_seed", type=int, help="synthetic data noise seed"
    )


def _vector_flag(raw: str) -> np.ndarray:
    try:
        return np.array([float(part) for part in raw.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse {raw!r} as a number list")


def _add_run_options(parser: _Parser) -> None:
    parser.add_argument("--problem", choices=PROBLEM_NAMES)
    parser.add_argument(
        "--init-mean", dest="init_mean", type=_vector_flag,
        help="scalar or comma list",
    )
    parser.add_argument(
        "--init-cov-scale", dest="init_cov_scale", type=float,
        help="initial covariance = scale * identity",
    )
    parser.add_argument(
        "--theta0", type=_vector_flag, help="start point, scalar or comma list"
    )
    parser.add_argument("--n-iterations", dest="n_iterations", type=int)
    parser.add_argument("--n-members", dest="n_members", type=int)
    parser.add_argument("--n-samples", dest="n_samples", type=int)
    parser.add_argument("--burn-in", dest="burn_in", type=int)
    parser.add_argument("--step-size", dest="step_size", type=float)


def build_parser() -> _Parser:
    parser = _Parser(prog="kalibr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the piston forward problem")
    _add_common(sim)
    for key, kind in _SCENARIO_KEYS.items():
        sim.add_argument(f"--{key.replace('_', '-')}", dest=key, type=kind)

    cal = sub.add_parser("calibrate", help="calibrate a named problem")
    _add_common(cal)
    _add_run_options(cal)
    cal.add_argument("--method", choices=METHOD_NAMES)

    smp = sub.add_parser("sample", help="posterior sampling (random-walk chain)")
    _add_common(smp)
    _add_run_options(smp)

    cmp_ = sub.add_parser("compare", help="two methods side by side")
    _add_common(cmp_)
    _add_run_options(cmp_)
    cmp_.add_argument("--method-a", dest="method_a", choices=METHOD_NAMES)
    cmp_.add_argument("--method-b", dest="method_b", choices=METHOD_NAMES)
    cmp_.add_argument("--config-a", dest="config_a", help="config file for side a")
    cmp_.add_argument("--config-b", dest="config_b", help="config file for side b")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        flags = {k: v for k, v in vars(args).items() if v is not None}
        command = flags.pop("command")
        if command == "simulate":
            return _cmd_simulate(flags)
        if command == "calibrate":
            return _cmd_run(flags, method_default="uki")
        if command == "sample":
            return _cmd_run(flags, method_override="mcmc")
        return _cmd_compare(flags)
    except CliConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KalibrError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
