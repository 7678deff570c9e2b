"""Tests for configuration, report emission, the acceptance suite and the CLI."""

import json
import os

import numpy as np
import pytest
import yaml

from src.chain.errors import ConfigError
from src.experiment import (
    AcceptanceSuite, ExperimentConfig, SEED_ENV, chain_digest, emit_report, load_config,
    resolve_seed, two_state_chain
)
from src.geodesic.integrator import ray_fan
from src.main import main
from src.transport.solver import SolverOptions, distance_W


@pytest.fixture
def config_file(tmp_path):
    """Default configuration with every writable path inside tmp_path."""
    config = load_config()
    config["app"]["output_dir"] = str(tmp_path / "results")
    config["logging"]["file"] = str(tmp_path / "logs" / "graphflow.log")
    config["database"]["path"] = str(tmp_path / "data" / "graphflow.db")
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(config))
    return str(path)


@pytest.fixture
def chain_file(tmp_path):
    path = tmp_path / "two_state.yaml"
    path.write_text("states: ['1', '2']\nK: [[0.8, 0.2], [0.4, 0.6]]\np: [1.0, 1.0]\n")
    return str(path)


class TestConfig:
    def test_default_config_loads(self):
        config = load_config()
        assert config["solver"]["steps"] == 64
        assert config["rays"]["n_rays"] == 72

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.yaml"))

    def test_missing_sections(self, tmp_path):
        path = tmp_path / "partial.yaml"
        path.write_text("app:\n  seed: 1\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_seed_precedence(self, monkeypatch):
        config = {"app": {"seed": 3}}
        monkeypatch.delenv(SEED_ENV, raising=False)
        assert resolve_seed(config) == 3
        monkeypatch.setenv(SEED_ENV, "11")
        assert resolve_seed(config) == 11
        assert resolve_seed(config, override=5) == 5
        monkeypatch.setenv(SEED_ENV, "eleven")
        with pytest.raises(ConfigError):
            resolve_seed(config)

    def test_overrides_and_ranges(self, monkeypatch):
        monkeypatch.delenv(SEED_ENV, raising=False)
        config = load_config()
        experiment = ExperimentConfig.build(config, {"solver": {"steps": 8, "opt_tol": None}})
        assert experiment.section("solver")["steps"] == 8
        assert experiment.section("solver")["opt_tol"] == config["solver"]["opt_tol"]
        assert config["solver"]["steps"] == 64
        with pytest.raises(ConfigError):
            ExperimentConfig.build(config, {"solver": {"steps": 1}})
        with pytest.raises(ConfigError):
            ExperimentConfig.build(config, {"rays": {"eps_bd": 2.0}})

    def test_missing_chain_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.build(load_config(), {}, chain_path=str(tmp_path / "absent.yaml"))


class TestReports:
    def test_solve_artifacts(self, two_state, tmp_path):
        report = distance_W([0.6, 0.8], [1.1, 1.3], two_state, steps=4)
        paths = emit_report(report, two_state, str(tmp_path))
        assert sorted(os.path.basename(p) for p in paths) == ["distance_W.json", "distance_W_trajectory.csv"]
        with open(tmp_path / "distance_W.json") as f:
            summary = json.load(f)
        assert summary["schema_version"] == 1
        assert summary["kind"] == "solve"
        assert summary["chain_digest"] == chain_digest(two_state)
        assert summary["trajectory_csv"] == "distance_W_trajectory.csv"

    def test_reports_are_byte_identical(self, two_state, tmp_path):
        report = distance_W([0.6, 0.8], [1.0, 0.5], two_state, steps=4)
        first = emit_report(report, two_state, str(tmp_path / "a"))
        again = distance_W([0.6, 0.8], [1.0, 0.5], two_state, steps=4)
        second = emit_report(again, two_state, str(tmp_path / "b"))
        for x, y in zip(first, second):
            with open(x, "rb") as fx, open(y, "rb") as fy:
                assert fx.read() == fy.read()

    def test_ray_manifest(self, two_state, tmp_path):
        rays = ray_fan([1.0, 1.0], two_state, n_rays=3, t_max=0.1)
        paths = emit_report(rays, two_state, str(tmp_path))
        assert len(paths) == 4
        with open(tmp_path / "rays_manifest.json") as f:
            manifest = json.load(f)
        assert [r["csv"] for r in manifest["rays"]] == ["rays_000.csv", "rays_001.csv", "rays_002.csv"]

    def test_unknown_result_type(self, two_state, tmp_path):
        with pytest.raises(TypeError):
            emit_report({"value": 1.0}, two_state, str(tmp_path))


class TestSuite:
    def test_two_state_chain(self):
        chain = two_state_chain()
        np.testing.assert_allclose(chain.pi, [2.0 / 3.0, 1.0 / 3.0])

    def test_inequality_battery(self):
        suite = AcceptanceSuite({"battery_samples": 200}, SolverOptions(), seed=1)
        details = suite.inequality_battery()
        assert details["passed"]
        for key in (
            "monotonicity", "concavity", "alpha_ray_affine", "divergence_conservation",
            "jensen", "rearrangement", "antisymmetrization", "antisymmetrization_divergence",
        ):
            assert key in details
        assert details["jensen"] <= 1e-12
        assert details["antisymmetrization_divergence"] <= 1e-14

    def test_span_direction(self):
        suite = AcceptanceSuite({"steps": 8}, SolverOptions(), seed=1)
        details = suite.span_direction()
        assert details["passed"]


class TestCli:
    def test_validate(self, config_file, chain_file, capsys):
        code = main(["--config", config_file, "validate", "--chain", chain_file, "--mu0", "0.6,0.8"])
        assert code == 0
        out = capsys.readouterr().out
        assert "states: ['1', '2']" in out
        assert "mu0_mass:" in out

    def test_invalid_chain(self, config_file, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("states: ['1', '2']\nK: [[0.8, 0.3], [0.4, 0.6]]\n")
        assert main(["--config", config_file, "validate", "--chain", str(path)]) == 1

    def test_usage_errors(self, config_file, tmp_path):
        assert main(["--config", config_file, "distance"]) == 2
        assert main(["--config", config_file, "validate", "--chain", str(tmp_path / "absent.yaml")]) == 2

    def test_distance_of_identical_measures(self, config_file, chain_file, tmp_path, capsys):
        out_dir = tmp_path / "run"
        code = main([
            "--config", config_file, "distance", "--chain", chain_file,
            "--mu0", "0.6,0.8", "--mu1", "0.6,0.8", "--steps", "4", "--out", str(out_dir),
        ])
        assert code == 0
        assert "distance: 0.0" in capsys.readouterr().out
        assert (out_dir / "distance_W.json").exists()

    def test_record_run(self, config_file, chain_file, tmp_path):
        code = main([
            "--config", config_file, "distance", "--chain", chain_file,
            "--mu0", "0.6,0.8", "--mu1", "1.1,1.3", "--steps", "4",
            "--out", str(tmp_path / "run"), "--record",
        ])
        assert code == 0
        assert (tmp_path / "data" / "graphflow.db").exists()
