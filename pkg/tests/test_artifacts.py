"""Serialization layer: exact float round-trips, stable layouts, schema checks."""

import json
import math

import jsonschema
import numpy as np
import pytest

from kalibr.artifacts import (
    SUMMARY_FORMAT_VERSION,
    format_float17,
    json_dumps17,
    load_summary_schema,
    write_covariances_json,
    write_damage_field_csv,
    write_displacement_csv,
    write_fluid_field_csv,
    write_iterates_csv,
    write_optimizer_csv,
    write_samples_csv,
    write_summary,
)
from kalibr.errors import ValidationError
from kalibr.piston import FluidState1D

TRICKY = [
    0.1,
    -0.1,
    1.0 / 3.0,
    math.pi,
    1e-308,
    -1.7976931348623157e308,
    5e-324,
    0.0,
    -0.0,
    123456789.123456789,
    2.0**52 + 1.0,
]


def test_float17_round_trips_exactly():
    for value in TRICKY:
        assert float(format_float17(value)) == value


def test_float17_rejects_non_finite():
    for value in (np.nan, np.inf, -np.inf):
        with pytest.raises(ValidationError):
            format_float17(value)


def test_json_dumps17_is_sorted_and_exact():
    text = json_dumps17({"b": 0.1, "a": [1.0 / 3.0, True, None, "s"], "c": 7})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    back = json.loads(text)
    assert back["b"] == 0.1
    assert back["a"][0] == 1.0 / 3.0
    assert back["a"][1] is True and back["a"][2] is None and back["a"][3] == "s"
    assert back["c"] == 7
    # a second serialization is bitwise identical
    assert text == json_dumps17({"c": 7, "a": [1.0 / 3.0, True, None, "s"], "b": 0.1})


def test_json_dumps17_rejects_unserializable():
    with pytest.raises(ValidationError):
        json_dumps17({"x": object()})
    with pytest.raises(ValidationError):
        json_dumps17({1: "non-string key"})


def test_iterates_csv_layout(tmp_path):
    means = np.array([[1.0, 2.0], [1.5, 2.5]])
    diags = np.array([[0.1, 0.2], [0.05, 0.1]])
    path = write_iterates_csv(tmp_path / "it.csv", means, diags, [3.0, 1.0])
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,m_1,m_2,C_diag_1,C_diag_2,phi"
    assert lines[1] == "0,1,2,0.10000000000000001,0.20000000000000001,3"
    assert len(lines) == 3
    parsed = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(parsed[:, 1:3], means)
    np.testing.assert_array_equal(parsed[:, 3:5], diags)


def test_iterates_csv_rejects_mismatched_table(tmp_path):
    with pytest.raises(ValidationError):
        write_iterates_csv(tmp_path / "x.csv", np.ones((2, 2)), np.ones((3, 2)), [1.0, 2.0])


def test_covariances_json_round_trip(tmp_path):
    covs = [np.array([[1.0, 0.1], [0.1, 2.0]]), np.array([[0.5, 0.0], [0.0, 0.25]])]
    path = write_covariances_json(tmp_path / "cov.json", covs)
    back = json.loads(path.read_text())
    assert [e["iter"] for e in back["iterations"]] == [0, 1]
    np.testing.assert_array_equal(np.array(back["iterations"][0]["covariance"]), covs[0])


def test_samples_and_optimizer_csv_headers(tmp_path):
    s = write_samples_csv(tmp_path / "s.csv", np.zeros((4, 3)))
    assert s.read_text().splitlines()[0] == "theta_1,theta_2,theta_3"
    o = write_optimizer_csv(tmp_path / "o.csv", np.zeros((2, 2)), np.array([1.0, 0.5]))
    assert o.read_text().splitlines()[0] == "iter,theta_1,theta_2,phi"
    with pytest.raises(ValidationError):
        write_optimizer_csv(tmp_path / "bad.csv", np.zeros((2, 2)), np.array([1.0]))


def test_displacement_csv(tmp_path):
    path = write_displacement_csv(tmp_path / "d.csv", [0.1, 0.2], [1e-3, -2e-3])
    lines = path.read_text().splitlines()
    assert lines[0] == "t,u"
    parsed = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(parsed[:, 1], [1e-3, -2e-3])
    with pytest.raises(ValidationError):
        write_displacement_csv(tmp_path / "bad.csv", [0.1], [1.0, 2.0])


def test_fluid_field_csv(tmp_path):
    fluid = FluidState1D.uniform(1.225, 0.0, 2.0, x_p=1.0, n_cells=10, x_max=2.0)
    path = write_fluid_field_csv(tmp_path / "f.csv", fluid)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,rho,v,p"
    assert len(lines) == 1 + fluid.n_active


def test_damage_field_csv(tmp_path):
    y = np.linspace(0.0, 1.0, 5)
    path = write_damage_field_csv(tmp_path / "w.csv", y, y * 0.1, y * 0.05, y * 0.2, y * 0.11)
    lines = path.read_text().splitlines()
    assert lines[0] == "y,omega_est,omega_lo,omega_hi,omega_truth"
    assert len(lines) == 6
    with pytest.raises(ValidationError):
        write_damage_field_csv(tmp_path / "bad.csv", y, y, y, y, y[:-1])


def test_summary_schema_accepts_valid_and_rejects_invalid(tmp_path):
    schema = load_summary_schema()
    summary = {
        "format_version": SUMMARY_FORMAT_VERSION,
        "problem": "toy",
        "method": "uki",
        "seed": 0,
        "n_iterations": 3,
        "converged": True,
        "message": "ok",
        "final_mean": [0.5],
        "final_covariance": [[0.1]],
        "phi": 1.25,
        "wall_time_s": 0.01,
    }
    jsonschema.validate(summary, schema)
    path = write_summary(tmp_path / "summary.json", summary)
    jsonschema.validate(json.loads(path.read_text()), schema)

    for broken in (
        {**summary, "format_version": "one"},
        {**summary, "final_mean": "not a list"},
        {**summary, "unexpected_key": 1},
        {k: v for k, v in summary.items() if k != "problem"},
    ):
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(broken, schema)


def test_written_files_end_with_single_newline(tmp_path):
    path = write_samples_csv(tmp_path / "s.csv", np.ones((2, 1)))
    text = path.read_bytes().decode()
    assert text.endswith("\n") and not text.endswith("\n\n")
    assert "\r" not in text
