import json
from unittest.mock import patch

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from logging_config import Logger
from qbohm.errors import NumericalError
from runner.main import cli

RANKINE_FAST = ["--tau-max", "5", "--density-points", "16", "--radii", "0.5,2", "--record-every", "50"]


@pytest.fixture(autouse=True)
def fresh_logging():
    Logger.reset()
    yield
    Logger.reset()


@pytest.fixture
def invoke(tmp_path):
    runner = CliRunner()

    def _invoke(*args):
        return runner.invoke(cli, ["--log-dir", str(tmp_path / "logs"), *args])

    return _invoke


def _summary(directory, name):
    return json.loads((directory / name).read_text())


def test_list_experiments(invoke):
    result = invoke("list-experiments")
    assert result.exit_code == 0
    names = [line.split()[0] for line in result.output.splitlines()]
    assert names == ["evolve", "trajectories", "relax", "rankine", "clebsch-check"]


def test_rankine_run_and_verify(invoke, tmp_path):
    out = tmp_path / "rankine"
    result = invoke("run", "rankine", *RANKINE_FAST, "--output-dir", str(out))
    assert result.exit_code == 0, result.output
    for name in ("rankine_profile.csv", "rankine_traj.csv", "rankine_density.csv", "rankine_summary.json",
                 "manifest.json"):
        assert (out / name).is_file()

    manifest = _summary(out, "manifest.json")
    assert manifest["experiment"] == "rankine"
    assert manifest["parameters"]["tau_max"] == 5.0
    assert {o["name"] for o in manifest["outputs"]} >= {"rankine_profile.csv", "rankine_summary.json"}
    assert _summary(out, "rankine_summary.json")["barrier"]["regime"] == "above-barrier"

    verified = invoke("verify", str(out / "manifest.json"))
    assert verified.exit_code == 0, verified.output
    assert "PASS" in verified.output

    rerun = invoke("verify", str(out / "manifest.json"), "--rerun")
    assert rerun.exit_code == 0, rerun.output


def test_verify_detects_tampering(invoke, tmp_path):
    out = tmp_path / "rankine"
    assert invoke("run", "rankine", *RANKINE_FAST, "--output-dir", str(out)).exit_code == 0
    profile = out / "rankine_profile.csv"
    profile.write_text(profile.read_text() + "0,0,0,0\n")

    result = invoke("verify", str(out / "manifest.json"))
    assert result.exit_code == 1
    assert "FAIL rankine_profile.csv: checksum mismatch" in result.output


def test_verify_missing_manifest(invoke, tmp_path):
    result = invoke("verify", str(tmp_path / "nowhere" / "manifest.json"))
    assert result.exit_code == 2


def test_invalid_parameter_exits_2(invoke, tmp_path):
    result = invoke("run", "rankine", "--eps", "-1", "--output-dir", str(tmp_path / "bad"))
    assert result.exit_code == 2
    assert "parameters.eps" in result.output
    assert not (tmp_path / "bad" / "manifest.json").exists()


def test_unknown_config_key_exits_2(invoke, tmp_path):
    config = tmp_path / "rankine.json"
    config.write_text(json.dumps({"experiment": "rankine", "parameters": {"epsilon": 3.0}}))
    result = invoke("run-config", str(config), "--output-dir", str(tmp_path / "out"))
    assert result.exit_code == 2


def test_relax_needs_seed(invoke, tmp_path):
    result = invoke("run", "relax", "--n-traj", "100", "--output-dir", str(tmp_path / "relax"))
    assert result.exit_code == 2
    assert "seed" in result.output


def test_numerical_failure_exits_3(invoke, tmp_path):
    with patch("runner.experiments.rankine.solve_radial", side_effect=NumericalError("radial solve diverged")):
        result = invoke("run", "rankine", "--output-dir", str(tmp_path / "rankine"))
    assert result.exit_code == 3
    assert "radial solve diverged" in result.output


def test_run_config_yaml_relax(invoke, tmp_path):
    config = tmp_path / "relax.yaml"
    config.write_text(yaml.safe_dump({
        "experiment": "relax",
        "seed": 11,
        "parameters": {
            "modes": [2, 2], "n_traj": 200, "cells": [4, 4], "quadrature_points": 17,
            "t_final": 0.05, "dt": 5e-3, "n_outputs": 2,
        },
    }))
    out = tmp_path / "relax"
    result = invoke("run-config", str(config), "--output-dir", str(out))
    assert result.exit_code == 0, result.output
    summary = _summary(out, "relaxation_summary.json")
    assert summary["outputs"] == 3
    assert _summary(out, "manifest.json")["seed"] == 11
    assert (out / "relaxation_report.csv").read_text().startswith("t,H_bar,KS,captured_count")


def test_flags_override_config(invoke, tmp_path):
    config = tmp_path / "rankine.yaml"
    config.write_text(yaml.safe_dump({"experiment": "rankine", "parameters": {"eps": 3.0, "tau_max": 5.0}}))
    out = tmp_path / "rankine"
    result = invoke("run", "rankine", "--config", str(config), "--eps", "1", "--density-points", "0",
                    "--radii", "0.5", "--output-dir", str(out))
    assert result.exit_code == 0, result.output
    assert _summary(out, "rankine_summary.json")["barrier"]["regime"] == "below-barrier"
    assert not (out / "rankine_density.csv").exists()


def test_config_for_other_experiment_is_rejected(invoke, tmp_path):
    config = tmp_path / "relax.json"
    config.write_text(json.dumps({"experiment": "relax", "parameters": {}}))
    result = invoke("run", "rankine", "--config", str(config), "--output-dir", str(tmp_path / "out"))
    assert result.exit_code == 2


def test_output_dir_that_is_a_file(invoke, tmp_path):
    blocker = tmp_path / "taken"
    blocker.write_text("")
    result = invoke("run", "rankine", *RANKINE_FAST, "--output-dir", str(blocker))
    assert result.exit_code == 2


def test_evolve_small_run(invoke, tmp_path):
    out = tmp_path / "evolve"
    result = invoke("run", "evolve", "--points", "64", "--steps", "10", "--record-every", "5",
                    "--output-dir", str(out))
    assert result.exit_code == 0, result.output
    summary = _summary(out, "evolve_summary.json")
    assert summary["snapshots"] == 3
    assert summary["norm_drift"] < 1e-10
    assert (out / "snapshot_0002.csv").is_file()


def test_trajectories_vortex_run(invoke, tmp_path):
    out = tmp_path / "traj"
    result = invoke("run", "trajectories", "--flow", "vortex", "--t-final", "2", "--dt", "5e-3",
                    "--radii", "0.5", "--output-dir", str(out))
    assert result.exit_code == 0, result.output
    summary = _summary(out, "trajectories_summary.json")
    assert summary["orbit_periods"][0] == pytest.approx(summary["expected_periods"][0], rel=1e-4)
    assert (out / "trajectories.csv").read_text().startswith("trajectory_id,t,x,y,status")


def test_trajectories_hydrogen_launch_velocity(invoke, tmp_path):
    out = tmp_path / "hydrogen"
    result = invoke("run", "trajectories", "--flow", "hydrogen", "--radii", "1", "--velocity", "0,0,0.3",
                    "--t-final", "5", "--dt", "0.01", "--output-dir", str(out))
    assert result.exit_code == 0, result.output
    summary = _summary(out, "trajectories_summary.json")
    assert summary["speed_drift"] < 1e-8
    assert summary["final_radius"][0] == pytest.approx(np.sqrt(1.0 + 0.09 * 25.0), abs=1e-8)
    assert _summary(out, "manifest.json")["parameters"]["velocity"] == [0.0, 0.0, 0.3]


def test_trajectories_velocity_needs_three_components(invoke, tmp_path):
    result = invoke("run", "trajectories", "--flow", "hydrogen", "--velocity", "0,0.3",
                    "--output-dir", str(tmp_path / "bad"))
    assert result.exit_code == 2
    assert "velocity" in result.output


def test_clebsch_check_run(invoke, tmp_path):
    out = tmp_path / "clebsch"
    result = invoke("run", "clebsch-check", "--points", "128", "--output-dir", str(out))
    assert result.exit_code == 0, result.output
    summary = _summary(out, "clebsch_summary.json")
    assert summary["all_passed"], summary["failed"]
