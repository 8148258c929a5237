"""End-to-end smoke runs on the secondary geometries: 3D torus at tiny
resolution and the no-slip box provider."""

import json

import numpy as np

from levyflow import cli, harness
from levyflow.config import RunConfig


def test_3d_torus_short_ensemble():
    cfg = RunConfig.from_dict({
        "basis": {"n_modes": 4, "resolution": 12, "d_space": 3},
        "noise": {"measure": "uniform_ball",
                  "params": {"rate": 2.0, "radius": 2.0, "mark_dim": 1},
                  "epsilon": 0.1, "brownian_dim": 1},
        "forcing": {"name": "linear_damping", "params": {}},
        "initial": {"u0": {"type": "decay", "amplitude": 0.5, "exponent": 1.0},
                    "rho0": {"type": "cosine", "m": 0.9, "M": 1.1}},
        "time": {"horizon": 0.25, "dt": 0.03125, "storage_stride": 8},
        "ensemble": {"n_paths": 3, "seed": 31, "p_moments": [2],
                     "theta_grid": []},
        "nu": 0.1,
    })
    rep = harness.run_ensemble(cfg)
    assert rep.aborted_fraction == 0.0
    assert rep.rho_range[0] >= 0.9 and rep.rho_range[1] <= 1.1
    m2 = rep.moment_estimates[0]
    assert np.isfinite(m2.sup_energy) and m2.sup_energy > 0


def test_dirichlet_box_short_run():
    cfg = RunConfig.from_dict({
        "basis": {"provider": "dirichlet_stokes", "n_modes": 4,
                  "resolution": 17},
        "noise": {"measure": "uniform_ball",
                  "params": {"rate": 2.0, "radius": 2.0, "mark_dim": 1},
                  "epsilon": 0.1, "brownian_dim": 1},
        "forcing": {"name": "linear_damping", "params": {}},
        "initial": {"u0": {"type": "decay", "amplitude": 0.3, "exponent": 1.0},
                    "rho0": {"type": "cosine", "m": 0.9, "M": 1.1}},
        "time": {"horizon": 0.25, "dt": 1.0 / 128, "storage_stride": 8},
        "ensemble": {"n_paths": 2, "seed": 33, "p_moments": [2],
                     "theta_grid": []},
        "nu": 0.1,
    })
    rep = harness.run_ensemble(cfg)
    assert rep.aborted_fraction == 0.0
    assert rep.mass_drift_max <= 1e-8
    assert rep.rho_range[0] >= 0.9 and rep.rho_range[1] <= 1.1


def test_snapshot_emission(tmp_path):
    import yaml

    tree = {
        "basis": {"n_modes": 4, "resolution": 16},
        "noise": {"measure": "zero", "params": {}, "epsilon": 0.01,
                  "brownian_dim": 1},
        "forcing": {"name": "zero", "params": {}},
        "initial": {"u0": {"type": "decay", "amplitude": 0.5, "exponent": 1.0},
                    "rho0": {"type": "cosine", "m": 0.8, "M": 1.2}},
        "time": {"horizon": 0.25, "dt": 0.03125, "storage_stride": 2},
        "ensemble": {"n_paths": 2, "seed": 4, "p_moments": [2],
                     "theta_grid": []},
        "output": {"directory": str(tmp_path / "run"),
                   "snapshot_times": [0.125, 0.25]},
    }
    cfg_path = tmp_path / "c.yaml"
    with open(cfg_path, "w") as fh:
        yaml.safe_dump(tree, fh)
    assert cli.main(["simulate", "--config", str(cfg_path), "--quiet"]) == 0
    for ts in ("0.125", "0.25"):
        side = json.loads((tmp_path / "run" / f"density_t{ts}.json").read_text())
        assert side["shape"] == [16, 16]
        raw = np.fromfile(tmp_path / "run" / f"density_t{ts}.bin")
        assert raw.shape == (256,)
        assert 0.8 <= raw.min() and raw.max() <= 1.2
