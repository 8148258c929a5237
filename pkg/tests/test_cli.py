"""Config parsing, subcommands, artifacts, and reproducibility."""

import json
from pathlib import Path

import pytest
import yaml

from levyflow import cli
from levyflow.config import RunConfig, parse_config
from levyflow.errors import ConfigurationError

REPO_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "default.yaml"


def _write_cfg(tmp_path, tree):
    p = tmp_path / "run.yaml"
    with open(p, "w") as fh:
        yaml.safe_dump(tree, fh)
    return str(p)


SMALL_TREE = {
    "basis": {"n_modes": 4, "resolution": 16},
    "noise": {"measure": "zero", "params": {}, "epsilon": 0.01,
              "brownian_dim": 1},
    "forcing": {"name": "zero", "params": {}},
    "initial": {"u0": {"type": "zero"},
                "rho0": {"type": "constant", "value": 1.0}},
    "time": {"horizon": 0.25, "dt": 0.03125, "storage_stride": 2},
    "ensemble": {"n_paths": 3, "seed": 4, "p_moments": [2, 4],
                 "theta_grid": [0.0625, 0.125]},
}


class TestParseConfig:
    def test_minimal_file_fills_defaults(self, tmp_path):
        cfg = parse_config(_write_cfg(tmp_path, {"nu": 0.2}))
        assert cfg.nu == 0.2
        assert cfg.basis["provider"] == "torus_fourier"  # documented default
        assert cfg.ensemble["n_paths"] >= 1

    def test_repo_default_config_is_valid(self):
        cfg = parse_config(REPO_CONFIG)
        assert cfg.basis["n_modes"] == 8

    def test_zero_density_lower_bound_rejected(self, tmp_path):
        path = _write_cfg(
            tmp_path,
            {"initial": {"rho0": {"type": "cosine", "m": 0.0, "M": 1.0}}},
        )
        with pytest.raises(ConfigurationError) as err:
            parse_config(path)
        assert any("0 < m <= M" in p for p in err.value.problems)

    def test_theta_off_storage_grid_names_both_grids(self, tmp_path):
        path = _write_cfg(
            tmp_path,
            {"time": {"horizon": 1.0, "dt": 0.015625, "storage_stride": 4},
             "ensemble": {"theta_grid": [0.1]}},
        )
        with pytest.raises(ConfigurationError) as err:
            parse_config(path)
        msg = "; ".join(err.value.problems)
        assert "theta=0.1" in msg and "storage" in msg

    def test_all_violations_reported_together(self, tmp_path):
        path = _write_cfg(
            tmp_path,
            {"basis": {"provider": "spherical", "n_modes": 0},
             "noise": {"measure": "cauchy", "epsilon": 2.0},
             "nu": -1.0},
        )
        with pytest.raises(ConfigurationError) as err:
            parse_config(path)
        probs = err.value.problems
        assert len(probs) >= 4
        assert any("basis.provider" in p for p in probs)
        assert any("noise.measure" in p and "uniform_ball" in p for p in probs)
        assert any("nu" in p for p in probs)

    def test_unknown_forcing_lists_alternatives(self, tmp_path):
        path = _write_cfg(tmp_path, {"forcing": {"name": "vortex"}})
        with pytest.raises(ConfigurationError) as err:
            parse_config(path)
        assert any("linear_damping" in p for p in err.value.problems)


class TestSubcommands:
    def test_simulate_zero_config_exit_zero(self, tmp_path):
        cfg_path = _write_cfg(tmp_path, SMALL_TREE)
        out = tmp_path / "run"
        code = cli.main(
            ["simulate", "--config", cfg_path, "--out", str(out), "--quiet"]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        for m in report["report"]["moments"]:
            assert m["sup_energy"] == 0.0
        assert (out / "config_echo.yaml").exists()
        assert (out / "manifest.json").exists()
        assert (out / "plots.gp").exists()

    def test_simulate_writes_trajectory_stream(self, tmp_path):
        tree = dict(SMALL_TREE)
        tree["output"] = {"directory": str(tmp_path / "run2"),
                          "trajectories": "first"}
        cfg_path = _write_cfg(tmp_path, tree)
        code = cli.main(["simulate", "--config", cfg_path, "--quiet"])
        assert code == 0
        lines = (tmp_path / "run2" / "trajectory_00000.jsonl").read_text().splitlines()
        assert len(lines) == 8  # one record per accepted step
        rec = json.loads(lines[0])
        assert set(rec) == {"t", "energy", "grad_norm", "jump_count",
                            "rho_min", "rho_max"}

    def test_tightness_csv_rows_match_theta_grid(self, tmp_path):
        tree = dict(SMALL_TREE)
        tree["time"] = {"horizon": 1.0, "dt": 1.0 / 256, "storage_stride": 4}
        tree["ensemble"] = {"n_paths": 4, "seed": 4, "p_moments": [2],
                            "theta_grid": [1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4]}
        cfg_path = _write_cfg(tmp_path, tree)
        out = tmp_path / "tight"
        code = cli.main(
            ["tightness", "--config", cfg_path, "--out", str(out), "--quiet"]
        )
        assert code == 0
        rows = (out / "increments.csv").read_text().splitlines()
        assert len(rows) == 1 + 5
        exp = json.loads((out / "exponent.json").read_text())
        assert "fitted_increment_exponent" in exp

    def test_noise_test_writes_report(self, tmp_path):
        tree = {"noise": {"measure": "uniform_ball",
                          "params": {"rate": 2.0, "radius": 2.0, "mark_dim": 1},
                          "epsilon": 0.05, "brownian_dim": 1},
                "verify": {"noise_paths": 1500}}
        cfg_path = _write_cfg(tmp_path, tree)
        out = tmp_path / "noise"
        code = cli.main(
            ["noise-test", "--config", cfg_path, "--out", str(out), "--quiet"]
        )
        assert code == 0
        rep = json.loads((out / "noise_report.json").read_text())
        assert rep["passed"] is True
        assert rep["large_total"] == pytest.approx(1.0)

    def test_invalid_config_exit_one(self, tmp_path):
        cfg_path = _write_cfg(tmp_path, {"nu": -3.0})
        code = cli.main(["simulate", "--config", cfg_path, "--quiet"])
        assert code == 1

    def test_seed_and_paths_overrides(self, tmp_path):
        cfg_path = _write_cfg(tmp_path, SMALL_TREE)
        out = tmp_path / "ovr"
        code = cli.main(
            ["simulate", "--config", cfg_path, "--out", str(out),
             "--seed", "99", "--paths", "2", "--quiet"]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["report"]["seed"] == 99
        assert report["report"]["n_paths"] == 2


class TestReproducibility:
    def test_rerun_byte_identical_modulo_manifest(self, tmp_path):
        # re-running with the same directory and seed must reproduce every
        # artifact byte for byte; only the manifest carries a timestamp
        tree = dict(SMALL_TREE)
        tree["noise"] = {"measure": "uniform_ball",
                         "params": {"rate": 2.0, "radius": 2.0, "mark_dim": 1},
                         "epsilon": 0.05, "brownian_dim": 1}
        tree["forcing"] = {"name": "linear_damping", "params": {}}
        tree["ensemble"] = {"n_paths": 6, "seed": 12, "p_moments": [2, 4],
                            "theta_grid": [0.0625]}
        cfg_path = _write_cfg(tmp_path, tree)
        out = tmp_path / "run"
        names = ("report.json", "moments.csv", "increments.csv",
                 "config_echo.yaml", "plots.gp")
        assert cli.main(
            ["simulate", "--config", cfg_path, "--out", str(out), "--quiet"]
        ) == 0
        first = {n: (out / n).read_bytes() for n in names}
        first_manifest = json.loads((out / "manifest.json").read_text())
        assert cli.main(
            ["simulate", "--config", cfg_path, "--out", str(out), "--quiet"]
        ) == 0
        for n in names:
            assert (out / n).read_bytes() == first[n], f"{n} differs on re-run"
        second_manifest = json.loads((out / "manifest.json").read_text())
        assert first_manifest["checksums"] == second_manifest["checksums"]


class TestWorkerEnv:
    def test_worker_pool_matches_serial(self, tmp_path, monkeypatch):
        cfg = RunConfig.from_dict(
            {**SMALL_TREE,
             "noise": {"measure": "uniform_ball",
                       "params": {"rate": 2.0, "radius": 2.0, "mark_dim": 1},
                       "epsilon": 0.05, "brownian_dim": 1},
             "forcing": {"name": "linear_damping", "params": {}},
             "ensemble": {"n_paths": 6, "seed": 8, "p_moments": [2],
                          "theta_grid": []}}
        )
        from levyflow import harness

        serial = harness.run_ensemble(cfg)
        monkeypatch.setenv("LEVYFLOW_WORKERS", "2")
        parallel = harness.run_ensemble(cfg)
        monkeypatch.delenv("LEVYFLOW_WORKERS")
        assert json.dumps(serial.to_json_dict(), sort_keys=True) == json.dumps(
            parallel.to_json_dict(), sort_keys=True
        )
