"""Acceptance suite: one test per criterion, each printing a PASS line.

Run ``pytest tests/test_acceptance.py -s`` to see the per-criterion lines;
sizes and tolerances are pinned here, not configurable.
"""

import json
import time

import numpy as np
import pytest

from levyflow import cli, forcing, harness, noise
from levyflow.basis import CoefficientVector, build_basis
from levyflow.config import RunConfig
from levyflow.galerkin import (
    GalerkinSystem,
    PathHistory,
    SimulationState,
    assemble_mass,
    convection_rhs,
    step,
    weak_form_residual,
)
from levyflow.transport import DensityField


def _announce(num, name, detail, t0):
    print(f"ACCEPTANCE {num:2d} PASS [{time.perf_counter() - t0:6.1f}s] "
          f"{name}: {detail}")


@pytest.fixture(scope="module")
def basis8():
    return build_basis("torus_fourier", 8, 32, 2)


def _random_admissible_density(grid, lo, hi, rng):
    mid, amp = 0.5 * (lo + hi), 0.5 * (hi - lo)
    vals = np.zeros(grid.n_nodes)
    for _ in range(3):
        k = rng.integers(1, 4, size=grid.d)
        vals += rng.standard_normal() * np.cos(
            2 * np.pi * grid.coords @ k + rng.uniform(0, 2 * np.pi)
        )
    peak = max(np.abs(vals).max(), 1e-12)
    return DensityField(mid + amp * vals / peak, (lo, hi), grid)


def test_criterion_01_mass_matrix_nondegeneracy(basis8):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    lo_all, hi_all = np.inf, -np.inf
    for _ in range(50):
        rho = _random_admissible_density(basis8.grid, 0.5, 2.0, rng)
        eigs = np.linalg.eigvalsh(assemble_mass(rho, basis8).matrix)
        lo_all, hi_all = min(lo_all, eigs.min()), max(hi_all, eigs.max())
        assert eigs.min() >= 0.5 - 1e-6
        assert eigs.max() <= 2.0 + 1e-6
    assert time.perf_counter() - t0 < 10.0
    _announce(1, "mass-matrix nondegeneracy",
              f"50 densities, spectrum within [{lo_all:.6f}, {hi_all:.6f}]", t0)


def test_criterion_02_convection_energy_neutrality(basis8):
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    rho1 = DensityField(np.ones(basis8.grid.n_nodes), (1.0, 1.0), basis8.grid)
    worst = 0.0
    for _ in range(100):
        phi = rng.standard_normal(8)
        b = convection_rhs(rho1, phi, basis8)
        ratio = abs(float(phi @ b)) / np.linalg.norm(phi) ** 3
        worst = max(worst, ratio)
        assert ratio <= 1e-8
    assert time.perf_counter() - t0 < 10.0
    _announce(2, "convection energy neutrality",
              f"max |phi.b|/|phi|^3 = {worst:.2e} over 100 samples", t0)


def test_criterion_03_density_maximum_principle_and_mass():
    t0 = time.perf_counter()
    cfg = RunConfig.from_dict({
        "basis": {"n_modes": 8, "resolution": 32},
        "noise": {"measure": "uniform_ball",
                  "params": {"rate": 3.0, "radius": 2.0, "mark_dim": 1},
                  "epsilon": 0.05, "brownian_dim": 1},
        "forcing": {"name": "linear_damping",
                    "params": {"kappa": 0.3, "sigma": 0.4,
                               "a_scale": 0.2, "b_scale": 0.2}},
        "initial": {"u0": {"type": "decay", "amplitude": 1.0, "exponent": 1.0},
                    "rho0": {"type": "cosine", "m": 0.8, "M": 1.2}},
        "time": {"horizon": 500.0 / 128.0, "dt": 1.0 / 128.0,
                 "storage_stride": 500},
        "ensemble": {"n_paths": 1, "seed": 103, "theta_grid": []},
        "nu": 0.1,
    })
    setup = harness.build_setup(cfg)
    path = noise.sample_noise_path(
        setup.measure, setup.base_times, setup.epsilon, 1, setup.seed, 0
    )
    system = setup.fresh_system()
    state = SimulationState(0.0, setup.rho0, CoefficientVector(setup.phi0))
    worst_drift = 0.0
    for i in range(500):
        prev_min, prev_max = state.rho.min(), state.rho.max()
        state, _ = step(state, system, path.slice(i))
        assert state.rho.min() >= prev_min  # exact: bounds never widen
        assert state.rho.max() <= prev_max
        drift = abs(state.rho.mass() - setup.rho0.mass0) / setup.rho0.mass0
        worst_drift = max(worst_drift, drift)
        assert drift <= 1e-8
    assert time.perf_counter() - t0 < 60.0
    _announce(3, "density maximum principle + mass",
              f"500 driven steps, max rel mass drift {worst_drift:.2e}", t0)


def test_criterion_04_deterministic_energy_inequality():
    t0 = time.perf_counter()
    base = {
        "basis": {"n_modes": 8, "resolution": 32},
        "noise": {"measure": "zero", "params": {}, "epsilon": 0.01,
                  "brownian_dim": 1},
        "forcing": {"name": "zero", "params": {}},
        "initial": {"u0": {"type": "decay", "amplitude": 1.0, "exponent": 1.0},
                    "rho0": {"type": "cosine", "m": 0.8, "M": 1.2}},
        "time": {"horizon": 1.0, "dt": 1.0 / 128.0, "storage_stride": 128},
        "ensemble": {"n_paths": 1, "seed": 104, "theta_grid": []},
        "nu": 0.1,
    }
    cfg = RunConfig.from_dict(base)
    res = harness.simulate_path(harness.build_setup(cfg), 0)
    diffs = np.diff(res.ledger.energy)
    assert np.all(diffs <= 1e-12 * max(res.ledger.energy.max(), 1.0))

    damped = RunConfig.from_dict({
        **base,
        "forcing": {"name": "linear_damping",
                    "params": {"kappa": 0.5, "sigma": 0.0,
                               "a_scale": 0.0, "b_scale": 0.0}},
    })
    setup = harness.build_setup(damped)
    res2 = harness.simulate_path(setup, 0)
    sup_e = float(res2.ledger.energy.max())
    log_bound = harness.gronwall_log_bound(
        harness.gronwall_inputs_from(setup), p=2
    )
    assert np.log(sup_e) <= log_bound
    assert time.perf_counter() - t0 < 60.0
    _announce(4, "deterministic energy inequality",
              f"monotone decay (worst step {diffs.max():.2e}); damped sup "
              f"energy {sup_e:.4f} <= Gronwall bound "
              f"{np.exp(min(log_bound, 700)):.4g}", t0)


def test_criterion_05_noise_statistics():
    t0 = time.perf_counter()
    mu = noise.make_measure("uniform_ball", rate=4.0, radius=2.0, mark_dim=1)
    horizon, epsilon, n_paths = 1.0, 0.1, 10_000
    lam = mu.large_total * horizon
    counts = np.empty(n_paths)
    comp = np.empty(n_paths)
    mass = mu.small_total(epsilon)
    for i in range(n_paths):
        rng = noise.path_rng(105, i)
        jumps, _ = noise.sample_jumps(mu, horizon, epsilon, rng)
        counts[i] = sum(1 for j in jumps if j.size_class == noise.LARGE)
        comp[i] = noise.compensated_increment(
            [1.0 for j in jumps if j.size_class == noise.SMALL], horizon, mass
        )
    mean_se = np.sqrt(lam / n_paths)
    assert abs(counts.mean() - lam) <= 3 * mean_se
    var_se = np.std((counts - counts.mean()) ** 2, ddof=1) / np.sqrt(n_paths)
    assert abs(counts.var(ddof=1) - lam) <= 3 * var_se
    comp_se = comp.std(ddof=1) / np.sqrt(n_paths)
    assert abs(comp.mean()) <= 3 * comp_se

    dt = 0.01
    inc = noise.sample_brownian(1, [dt] * 100_000, noise.path_rng(105, n_paths))
    bvar_se = np.sqrt(2.0 / (100_000 - 1)) * dt
    assert abs(inc.var(ddof=1) - dt) <= 3 * bvar_se
    assert time.perf_counter() - t0 < 120.0
    _announce(5, "noise statistics",
              f"count mean {counts.mean():.4f}/var {counts.var(ddof=1):.4f} "
              f"vs {lam}; compensated mean {comp.mean():+.4f} "
              f"(3SE {3 * comp_se:.4f}); brownian var {inc.var(ddof=1):.6f}",
              t0)


def test_criterion_06_ito_isometry():
    t0 = time.perf_counter()
    cfg = RunConfig.from_dict({
        "basis": {"n_modes": 4, "resolution": 16},
        "noise": {"measure": "zero", "params": {}, "epsilon": 0.01,
                  "brownian_dim": 1},
        "forcing": {"name": "linear_damping",
                    "params": {"kappa": 0.2, "sigma": 0.5,
                               "a_scale": 0.0, "b_scale": 0.0}},
        "initial": {"u0": {"type": "fixed", "values": [1.0, 0.5, 0.0, 0.0]},
                    "rho0": {"type": "cosine", "m": 0.8, "M": 1.2}},
        "time": {"horizon": 0.5, "dt": 1.0 / 32.0, "storage_stride": 16},
        "ensemble": {"n_paths": 10_000, "seed": 106, "theta_grid": []},
        "nu": 0.1,
    })
    rep = harness.ito_isometry_check(harness.build_setup(cfg), 10_000)
    assert rep.passed, rep.summary()
    assert time.perf_counter() - t0 < 300.0
    _announce(6, "Ito isometry", rep.summary(), t0)


def _moment_cfg(n_modes, n_paths, seed, theta_grid=(), dt=1.0 / 64,
                stride=16, horizon=1.0):
    return RunConfig.from_dict({
        "basis": {"n_modes": n_modes, "resolution": 32},
        "noise": {"measure": "uniform_ball",
                  "params": {"rate": 3.0, "radius": 2.0, "mark_dim": 1},
                  "epsilon": 0.05, "brownian_dim": 1},
        "forcing": {"name": "linear_damping",
                    "params": {"kappa": 0.3, "sigma": 0.4,
                               "a_scale": 0.2, "b_scale": 0.2}},
        "initial": {"u0": {"type": "decay", "amplitude": 1.0, "exponent": 2.0},
                    "rho0": {"type": "cosine", "m": 0.8, "M": 1.2}},
        "time": {"horizon": horizon, "dt": dt, "storage_stride": stride},
        "ensemble": {"n_paths": n_paths, "seed": seed, "p_moments": [2, 4],
                     "theta_grid": list(theta_grid)},
        "stopping": {"threshold": 50.0, "mode": "observe"},
        "nu": 0.1,
    })


def test_criterion_07_moment_boundedness_in_n():
    t0 = time.perf_counter()
    results = {}
    for n in (4, 8, 16):
        cfg = _moment_cfg(n, 400, seed=107)
        setup = harness.build_setup(cfg)
        rep = harness.run_ensemble(cfg, setup)
        gi = harness.gronwall_inputs_from(setup)
        results[n] = {
            "rep": rep,
            "log_bound": {p: harness.gronwall_log_bound(gi, p=p) for p in (2, 4)},
        }
    for p in (2, 4):
        ests = {n: next(m for m in results[n]["rep"].moment_estimates
                        if m.p == p) for n in (4, 8, 16)}
        vals = [ests[n].sup_energy for n in (4, 8, 16)]
        ses = [ests[n].sup_energy_se for n in (4, 8, 16)]
        trend = abs(vals[2] - vals[0])
        for i in range(3):
            for j in range(i + 1, 3):
                pooled = float(np.hypot(ses[i], ses[j]))
                assert abs(vals[i] - vals[j]) <= 3 * pooled + trend + 1e-12, (
                    f"p={p}: estimates {vals} exceed 3 pooled SE + trend"
                )
        for n in (4, 8, 16):
            assert np.log(ests[n].sup_energy) <= results[n]["log_bound"][p]
    assert time.perf_counter() - t0 < 1200.0
    v2 = [f"{results[n]['rep'].moment_estimates[0].sup_energy:.4f}"
          for n in (4, 8, 16)]
    _announce(7, "moment boundedness in n",
              f"E sup energy at n=4,8,16: {v2}; all below Gronwall bound", t0)


def test_criterion_08_increment_scaling():
    t0 = time.perf_counter()
    thetas = [1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4]
    cfg = _moment_cfg(8, 400, seed=108, theta_grid=thetas,
                      dt=1.0 / 256, stride=4)
    rep = harness.run_ensemble(cfg)
    slope = rep.fitted_increment_exponent
    assert slope >= 0.35, f"increment exponent {slope} below one-sided floor"
    assert time.perf_counter() - t0 < 1200.0
    _announce(8, "increment scaling",
              f"log-log slope {slope:.3f} (CI {rep.fitted_increment_ci[0]:.3f}"
              f"..{rep.fitted_increment_ci[1]:.3f}) >= 0.35", t0)


def test_criterion_09_linear_sde_strong_order():
    t0 = time.perf_counter()
    b1 = build_basis("torus_fourier", 1, 16, 2)
    nu, kappa, sigma, T = 0.005, 0.1, 1.0, 1.0
    lam1 = b1.eigenvalues[0]
    measure = noise.ZeroMeasure()
    spec = forcing.builtin("linear_damping", measure=measure, grid=b1.grid,
                           kappa=kappa, sigma=sigma, a_scale=0.0, b_scale=0.0)
    system = GalerkinSystem.build(b1, nu, spec, measure, 0.01)
    rho1 = DensityField(np.ones(b1.grid.n_nodes), (1.0, 1.0), b1.grid)

    def strong_error(n_steps, n_paths=400):
        errs = np.empty(n_paths)
        for s in range(n_paths):
            path = noise.sample_noise_path(
                measure, np.linspace(0, T, n_steps + 1), 0.01, 1, 109, s
            )
            st = SimulationState(0.0, rho1, CoefficientVector([1.0]))
            for i in range(n_steps):
                st, _ = step(st, system, path.slice(i))
            wt = path.sub_dw.sum()
            exact = np.exp((-kappa - nu * lam1 - 0.5 * sigma**2) * T
                           + sigma * wt)
            errs[s] = abs(st.phi.phi[0] - exact)
        return errs.mean()

    ladder = [8, 16, 32, 64]
    errors = [strong_error(n) for n in ladder]
    order = -np.polyfit(np.log(ladder), np.log(errors), 1)[0]
    assert 0.35 <= order <= 0.65, f"measured strong order {order}"
    assert time.perf_counter() - t0 < 120.0
    _announce(9, "linear-SDE strong order",
              f"measured order {order:.3f} in [0.35, 0.65] "
              f"(errors {['%.3g' % e for e in errors]})", t0)


def _residual_history(setup, system, path, n_steps):
    st = SimulationState(0.0, setup.rho0, CoefficientVector(setup.phi0.copy()))
    times, phis, rhos = [0.0], [setup.phi0.copy()], [setup.rho0]
    for i in range(n_steps):
        st, _ = step(st, system, path.slice(i))
        times.append(st.t)
        phis.append(st.phi.phi.copy())
        rhos.append(st.rho)
    return PathHistory(np.asarray(times), np.asarray(phis), rhos, path)


def test_criterion_10_weak_form_residual_consistency():
    t0 = time.perf_counter()
    T = 0.5
    # deterministic branch: residual order >= 1 under dt halving
    det_cfg = RunConfig.from_dict({
        "basis": {"n_modes": 4, "resolution": 16},
        "noise": {"measure": "zero", "params": {}, "epsilon": 0.05,
                  "brownian_dim": 1},
        "forcing": {"name": "zero", "params": {}},
        "initial": {"u0": {"type": "decay", "amplitude": 1.0, "exponent": 1.0},
                    "rho0": {"type": "cosine", "m": 0.8, "M": 1.2}},
        "time": {"horizon": T, "dt": T / 8, "storage_stride": 8},
        "ensemble": {"n_paths": 1, "seed": 110, "theta_grid": []},
        "nu": 0.1,
    })
    det_setup = harness.build_setup(det_cfg)
    det_resid = []
    ladder = [8, 16, 32, 64]
    for n_steps in ladder:
        system = det_setup.fresh_system()
        path = noise.sample_noise_path(
            det_setup.measure, np.linspace(0, T, n_steps + 1), 0.05, 1, 110, 0
        )
        hist = _residual_history(det_setup, system, path, n_steps)
        det_resid.append(max(
            abs(weak_form_residual(hist, det_setup.spec, system, ell))
            for ell in range(4)
        ))
    det_order = -np.polyfit(np.log(ladder), np.log(det_resid), 1)[0]
    assert det_order >= 0.95, f"deterministic residual order {det_order}"

    # stochastic branch: RMS residual order ~ 0.5 over 10^3 paths
    sto_cfg = RunConfig.from_dict({
        "basis": {"n_modes": 4, "resolution": 16},
        "noise": {"measure": "uniform_ball",
                  "params": {"rate": 24.0, "radius": 2.0, "mark_dim": 1},
                  "epsilon": 0.05, "brownian_dim": 1},
        "forcing": {"name": "linear_damping",
                    "params": {"kappa": 0.1, "sigma": 0.8,
                               "a_scale": 0.5, "b_scale": 0.5}},
        "initial": {"u0": {"type": "fixed",
                           "values": [1.0, 0.5, 0.25, 0.125]},
                    "rho0": {"type": "cosine", "m": 0.8, "M": 1.2}},
        "time": {"horizon": T, "dt": T / 8, "storage_stride": 8},
        "ensemble": {"n_paths": 1, "seed": 111, "theta_grid": []},
        "nu": 0.02,
    })
    sto_setup = harness.build_setup(sto_cfg)
    n_paths = 1000
    rms = []
    for n_steps in ladder:
        acc = 0.0
        for s in range(n_paths):
            system = sto_setup.fresh_system()
            path = noise.sample_noise_path(
                sto_setup.measure, np.linspace(0, T, n_steps + 1),
                0.05, 1, 111, s,
            )
            hist = _residual_history(sto_setup, system, path, n_steps)
            r = weak_form_residual(hist, sto_setup.spec, system, 0)
            acc += r * r
        rms.append(np.sqrt(acc / n_paths))
    sto_order = -np.polyfit(np.log(ladder), np.log(rms), 1)[0]
    assert 0.35 <= sto_order <= 0.65, f"stochastic residual order {sto_order}"
    assert time.perf_counter() - t0 < 600.0
    _announce(10, "weak-form residual consistency",
              f"deterministic order {det_order:.2f} >= 1; stochastic RMS "
              f"order {sto_order:.3f} in 0.5 +- 0.15", t0)


def test_criterion_11_verify_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg_tree = {
        "basis": {"n_modes": 4, "resolution": 16},
        "noise": {"measure": "uniform_ball",
                  "params": {"rate": 2.0, "radius": 2.0, "mark_dim": 1},
                  "epsilon": 0.05, "brownian_dim": 1},
        "forcing": {"name": "linear_damping", "params": {}},
        "initial": {"u0": {"type": "decay", "amplitude": 1.0, "exponent": 1.0},
                    "rho0": {"type": "cosine", "m": 0.8, "M": 1.2}},
        "time": {"horizon": 0.5, "dt": 1.0 / 32, "storage_stride": 4},
        "ensemble": {"n_paths": 8, "seed": 112, "p_moments": [2, 4],
                     "theta_grid": [0.125, 0.25]},
        "verify": {"paths": 16, "noise_paths": 1500, "ito_paths": 200},
        "nu": 0.1,
    }
    import yaml

    cfg_path = tmp_path / "verify.yaml"
    with open(cfg_path, "w") as fh:
        yaml.safe_dump(cfg_tree, fh)
    reports = []
    for name in ("v1", "v2"):
        out = tmp_path / name
        code = cli.main(["verify", "--config", str(cfg_path),
                         "--out", str(out), "--quiet"])
        assert code == 0, "verification battery failed"
        reports.append((out / "verify_report.json").read_bytes())
    assert reports[0] == reports[1], "verify reports differ between runs"
    payload = json.loads(reports[0])
    assert payload["all_passed"] is True
    _announce(11, "verify determinism",
              f"two runs byte-identical, {len(payload['checks'])} checks pass",
              t0)
