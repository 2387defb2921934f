"""Artifact serialization: iterate tables, traces, and run summaries.

Every float is written with 17 significant digits so a reader gets back
the exact binary value. Writers build the complete text in memory and
write it with "\\n" line endings regardless of platform; a run with a
fixed seed therefore reproduces its artifact files bitwise.

The run summary format is published as a JSON schema shipped inside the
package (``kalibr/schema/summary.schema.json``).
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError

__all__ = [
    "format_float17",
    "json_dumps17",
    "write_iterates_csv",
    "write_covariances_json",
    "write_samples_csv",
    "write_optimizer_csv",
    "write_displacement_csv",
    "write_fluid_field_csv",
    "write_damage_field_csv",
    "write_summary",
    "load_summary_schema",
    "SUMMARY_FORMAT_VERSION",
]

SUMMARY_FORMAT_VERSION = 1


def format_float17(value: float) -> str:
    """17-significant-digit decimal form; round-trips any finite double."""
    value = float(value)
    if not np.isfinite(value):
        raise ValidationError(f"cannot serialize non-finite value {value}")
    return format(value, ".17g")


def _json_fragment(obj, indent: int, level: int) -> str:
    pad = " " * (indent * level)
    inner = " " * (indent * (level + 1))
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise ValidationError(f"JSON keys must be strings, got {key!r}")
            parts.append(
                f"{inner}{json.dumps(key)}: {_json_fragment(obj[key], indent, level + 1)}"
            )
        return "{\n" + ",\n".join(parts) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not len(obj):
            return "[]"
        parts = [f"{inner}{_json_fragment(item, indent, level + 1)}" for item in obj]
        return "[\n" + ",\n".join(parts) + f"\n{pad}]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float17(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise ValidationError(f"cannot serialize {type(obj).__name__} to JSON")


def json_dumps17(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    return _json_fragment(obj, indent, 0) + "\n"


def _write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")
    return path


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def write_iterates_csv(path, means, cov_diags, misfits) -> Path:
    """Per-iteration table: ``iter, m_1..m_N, C_diag_1..C_diag_N, phi``."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    cov_diags = np.atleast_2d(np.asarray(cov_diags, dtype=float))
    misfits = np.asarray(misfits, dtype=float)
    n_iter, n_params = means.shape
    if cov_diags.shape != means.shape or misfits.shape != (n_iter,):
        raise ValidationError(
            f"inconsistent iterate table: means {means.shape}, "
            f"cov_diags {cov_diags.shape}, misfits {misfits.shape}"
        )
    header = (
        ["iter"]
        + [f"m_{i + 1}" for i in range(n_params)]
        + [f"C_diag_{i + 1}" for i in range(n_params)]
        + ["phi"]
    )
    rows = (
        [str(k)]
        + [format_float17(v) for v in means[k]]
        + [format_float17(v) for v in cov_diags[k]]
        + [format_float17(misfits[k])]
        for k in range(n_iter)
    )
    return _write_text(path, _csv(header, rows))


def write_covariances_json(path, covariances) -> Path:
    """Full covariance matrices, one entry per iteration."""
    entries = [
        {"iter": k, "covariance": np.asarray(cov, dtype=float)}
        for k, cov in enumerate(covariances)
    ]
    return _write_text(path, json_dumps17({"iterations": entries}))


def write_samples_csv(path, samples) -> Path:
    """Retained posterior samples, one row each."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    header = [f"theta_{i + 1}" for i in range(samples.shape[1])]
    rows = ([format_float17(v) for v in row] for row in samples)
    return _write_text(path, _csv(header, rows))


def write_optimizer_csv(path, iterates, objectives) -> Path:
    """Local-optimizer table: ``iter, theta_1..theta_N, phi``."""
    iterates = np.atleast_2d(np.asarray(iterates, dtype=float))
    objectives = np.asarray(objectives, dtype=float)
    if objectives.shape != (iterates.shape[0],):
        raise ValidationError(
            f"inconsistent optimizer table: iterates {iterates.shape}, "
            f"objectives {objectives.shape}"
        )
    header = (
        ["iter"] + [f"theta_{i + 1}" for i in range(iterates.shape[1])] + ["phi"]
    )
    rows = (
        [str(k)]
        + [format_float17(v) for v in iterates[k]]
        + [format_float17(objectives[k])]
        for k in range(iterates.shape[0])
    )
    return _write_text(path, _csv(header, rows))


def write_displacement_csv(path, times, displacement) -> Path:
    """Piston displacement trace: columns ``t,u``."""
    times = np.asarray(times, dtype=float)
    displacement = np.asarray(displacement, dtype=float)
    if times.shape != displacement.shape:
        raise ValidationError(
            f"times {times.shape} and displacement {displacement.shape} differ"
        )
    rows = (
        [format_float17(t), format_float17(u)] for t, u in zip(times, displacement)
    )
    return _write_text(path, _csv(["t", "u"], rows))


def write_fluid_field_csv(path, fluid) -> Path:
    """Active-region fluid field: columns ``x,rho,v,p``."""
    rho, v, p = fluid.primitives()
    x = fluid.centers[: fluid.n_active]
    rows = (
        [format_float17(a), format_float17(b), format_float17(c), format_float17(d)]
        for a, b, c, d in zip(x, rho, v, p)
    )
    return _write_text(path, _csv(["x", "rho", "v", "p"], rows))


def write_damage_field_csv(path, grid, estimate, lower, upper, truth) -> Path:
    """Field table: columns ``y,omega_est,omega_lo,omega_hi,omega_truth``."""
    cols = [np.asarray(c, dtype=float) for c in (grid, estimate, lower, upper, truth)]
    if len({c.shape for c in cols}) != 1:
        raise ValidationError("field columns have mismatched lengths")
    header = ["y", "omega_est", "omega_lo", "omega_hi", "omega_truth"]
    rows = ([format_float17(v) for v in row] for row in zip(*cols))
    return _write_text(path, _csv(header, rows))


def write_summary(path, summary: dict) -> Path:
    """Serialize a run summary dict (see the shipped schema)."""
    return _write_text(path, json_dumps17(summary))


def load_summary_schema() -> dict:
    """The published summary schema, read from the installed package."""
    text = (
        resources.files("kalibr").joinpath("schema/summary.schema.json").read_text()
    )
    return json.loads(text)
