"""Config-scale verification battery.

Runs the same invariant and statistics checks the acceptance suite pins at
spec scale, but sized from the run configuration so `levyflow verify`
finishes inside a desk budget.  Every check returns a named record; the
battery is deterministic given (config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import forcing as forcing_mod
from . import harness, noise
from .galerkin import assemble_mass, convection_rhs
from .transport import DensityField


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: {self.detail}"


def _random_density(grid, bounds, rng):
    m, M = bounds
    mid, amp = 0.5 * (m + M), 0.5 * (M - m)
    vals = np.zeros(grid.n_nodes)
    for _ in range(3):
        k = rng.integers(1, 4, size=grid.d)
        phase = rng.uniform(0, 2 * np.pi)
        vals += rng.standard_normal() * np.cos(
            2.0 * np.pi * grid.coords @ k + phase
        )
    peak = np.abs(vals).max()
    if peak > 0:
        vals = vals / peak
    return DensityField(mid + amp * vals, bounds, grid)


def check_basis_invariants(basis, tol_gram=None):
    tol_gram = tol_gram or (1e-10 if basis.provider == "torus_fourier" else 1e-8)
    gram_err = float(np.abs(basis.gram() - np.eye(basis.n_modes)).max())
    div = float(basis.divergence_residuals().max())
    bdry = float(basis.boundary_values().max())
    lam = basis.eigenvalues
    sorted_pos = bool(np.all(np.diff(lam) >= -1e-12) and np.all(lam > 0))
    ok = gram_err <= tol_gram and div <= 1e-8 and bdry <= 1e-8 and sorted_pos
    return CheckResult(
        "basis_invariants",
        ok,
        f"gram_err={gram_err:.2e}, div={div:.2e}, boundary={bdry:.2e}, "
        f"eigs_sorted_positive={sorted_pos}",
    )


def check_mass_spectrum(basis, bounds, n_densities, rng):
    lo, hi = bounds
    worst_lo, worst_hi = np.inf, -np.inf
    for _ in range(n_densities):
        rho = _random_density(basis.grid, bounds, rng)
        eigs = np.linalg.eigvalsh(assemble_mass(rho, basis).matrix)
        worst_lo = min(worst_lo, eigs.min())
        worst_hi = max(worst_hi, eigs.max())
    ok = worst_lo >= lo - 1e-6 and worst_hi <= hi + 1e-6
    return CheckResult(
        "mass_matrix_spectrum",
        ok,
        f"eigenvalues in [{worst_lo:.8f}, {worst_hi:.8f}] for bounds [{lo}, {hi}]"
        f" over {n_densities} densities",
    )


def check_convection_neutrality(basis, n_samples, rng):
    rho1 = DensityField(np.ones(basis.grid.n_nodes), (1.0, 1.0), basis.grid)
    worst = 0.0
    for _ in range(n_samples):
        phi = rng.standard_normal(basis.n_modes)
        b = convection_rhs(rho1, phi, basis)
        worst = max(worst, abs(float(phi @ b)) / np.linalg.norm(phi) ** 3)
    ok = worst <= 1e-8
    return CheckResult(
        "convection_energy_neutrality",
        ok,
        f"max |phi.b| / |phi|^3 = {worst:.2e} over {n_samples} samples",
    )


def check_transport_run(setup, n_steps):
    """Driven run: bounds must never widen, mass must hold per step."""
    res = harness.simulate_path(setup, path_index=0)
    lo0, hi0 = setup.rho0.min(), setup.rho0.max()
    ok = (
        not res.aborted
        and res.rho_min >= lo0 - 0.0
        and res.rho_max <= hi0 + 0.0
        and res.mass_drift_max <= 1e-8
    )
    return CheckResult(
        "transport_bounds_and_mass",
        ok,
        f"rho in [{res.rho_min:.6f}, {res.rho_max:.6f}] vs initial "
        f"[{lo0:.6f}, {hi0:.6f}]; max rel mass drift {res.mass_drift_max:.2e} "
        f"({n_steps} steps)",
    )


def check_deterministic_energy(setup_f0, setup_damped):
    """Noise off: f = 0 decays every step; damped run obeys the bound."""
    res = harness.simulate_path(setup_f0, path_index=0)
    diffs = np.diff(res.ledger.energy)
    monotone = bool(np.all(diffs <= 1e-12 * max(res.ledger.energy.max(), 1.0)))

    res2 = harness.simulate_path(setup_damped, path_index=0)
    sup_e = float(np.max(res2.ledger.energy))
    gi = harness.gronwall_inputs_from(setup_damped)
    log_bound = harness.gronwall_log_bound(gi, p=2)
    below = np.log(max(sup_e, 1e-300)) <= log_bound
    ok = monotone and below
    return CheckResult(
        "deterministic_energy_inequality",
        ok,
        f"monotone decay={monotone} (worst step {diffs.max():.2e}); "
        f"damped sup energy {sup_e:.6g} <= bound "
        f"{np.exp(min(log_bound, 700)):.6g}: {below}",
    )


def check_noise_statistics(measure, epsilon, horizon, n_paths, seed):
    lam = measure.large_total * horizon
    counts = np.empty(n_paths)
    comp_sums = np.empty(n_paths)
    bvars = []
    dt = 0.01
    for i in range(n_paths):
        rng = noise.path_rng(seed, i)
        jumps, comp_mass = noise.sample_jumps(measure, horizon, epsilon, rng)
        counts[i] = sum(1 for j in jumps if j.size_class == noise.LARGE)
        small = [1.0 for j in jumps if j.size_class == noise.SMALL]
        comp_sums[i] = float(
            noise.compensated_increment(small, horizon, comp_mass)
        )
        if i < 200:
            inc = noise.sample_brownian(1, [dt] * 50, rng)
            bvars.append(inc[:, 0])
    mean_se = np.sqrt(lam / n_paths) if lam > 0 else 1.0
    mean_ok = abs(counts.mean() - lam) <= 3 * mean_se
    var_se = (
        np.std(counts**2, ddof=1) / np.sqrt(n_paths) if lam > 0 else 1.0
    )
    var_ok = abs(counts.var(ddof=1) - lam) <= 3 * max(var_se, mean_se)
    comp_se = np.std(comp_sums, ddof=1) / np.sqrt(n_paths)
    comp_ok = abs(comp_sums.mean()) <= 3 * max(comp_se, 1e-12)
    bv = np.concatenate(bvars)
    bvar_se = np.sqrt(2.0 / (len(bv) - 1)) * dt
    bvar_ok = abs(bv.var(ddof=1) - dt) <= 3 * bvar_se
    ok = mean_ok and var_ok and comp_ok and bvar_ok
    return CheckResult(
        "noise_statistics",
        ok,
        f"poisson mean {counts.mean():.4f} vs {lam:.4f} (ok={mean_ok}), "
        f"var {counts.var(ddof=1):.4f} (ok={var_ok}); compensated mean "
        f"{comp_sums.mean():.3g} (ok={comp_ok}); brownian var "
        f"{bv.var(ddof=1):.5f} vs {dt} (ok={bvar_ok})",
    )


def check_forcing_contracts(basis, measure, brownian_dim, samples, seed):
    rng = np.random.default_rng(seed)
    failures = []
    for name in ("zero", "linear_damping", "bounded_saturation", "jump_scaled"):
        spec = forcing_mod.builtin(
            name, measure=measure, grid=basis.grid, brownian_dim=brownian_dim
        )
        rep = forcing_mod.verify_contract(spec, basis, samples=samples, rng=rng)
        if not rep.passed:
            failures.append(name)
    ok = not failures
    return CheckResult(
        "forcing_contracts",
        ok,
        "all catalog entries pass" if ok else f"failing entries: {failures}",
    )


def check_ito_isometry(setup, n_paths):
    rep = harness.ito_isometry_check(setup, n_paths)
    return CheckResult("ito_isometry", rep.passed, rep.summary())


def check_jensen_ordering(report):
    m = {me.p: me for me in report.moment_estimates}
    if 2 not in m or 4 not in m:
        return CheckResult("jensen_ordering", True, "p in {2,4} not both present")
    lhs = m[2].sup_energy
    rhs = np.sqrt(max(m[4].sup_energy, 0.0))
    pooled = 3.0 * (m[2].sup_energy_se + m[4].sup_energy_se)
    ok = lhs <= rhs + pooled + 1e-12
    return CheckResult(
        "jensen_ordering",
        ok,
        f"E sup e = {lhs:.6g} <= sqrt(E sup e^2) = {rhs:.6g} (+3SE {pooled:.2g})",
    )


def check_seed_determinism(cfg, setup):
    small = cfg.replace(ensemble={"n_paths": min(8, cfg.ensemble["n_paths"])})
    rep1 = harness.run_ensemble(small, setup)
    rep2 = harness.run_ensemble(small, setup)
    import json

    same = json.dumps(rep1.to_json_dict(), sort_keys=True) == json.dumps(
        rep2.to_json_dict(), sort_keys=True
    )
    return CheckResult(
        "seed_determinism", same,
        "identical reports on re-run" if same else "reports differ",
    )


def check_stopping_consistency(report, threshold):
    ok = report.max_recorded_norm <= threshold + max(
        report.max_substep_increment, report.max_jump_increment
    ) + 1e-9
    return CheckResult(
        "stopping_overshoot",
        ok,
        f"max norm {report.max_recorded_norm:.6g} <= threshold {threshold} + "
        f"max substep increment {report.max_substep_increment:.6g}",
    )


def run_verification_battery(cfg):
    """Run every check at config scale; returns (results, all_passed)."""
    setup = harness.build_setup(cfg)
    rng = np.random.default_rng(cfg.ensemble["seed"])
    n_verify = cfg.verify.get("paths", 64)
    results = [check_basis_invariants(setup.basis)]
    results.append(
        check_mass_spectrum(setup.basis, (0.5, 2.0), min(20, n_verify), rng)
    )
    results.append(check_convection_neutrality(setup.basis, min(50, n_verify), rng))
    results.append(check_transport_run(setup, setup.n_base))

    cfg_f0 = cfg.replace(
        forcing={"name": "zero", "params": {}},
        noise={"measure": "zero", "params": {}},
        ensemble={"n_paths": 1},
    )
    cfg_damped = cfg_f0.replace(
        forcing={"name": "linear_damping",
                 "params": {"sigma": 0.0, "a_scale": 0.0, "b_scale": 0.0}},
    )
    results.append(
        check_deterministic_energy(
            harness.build_setup(cfg_f0), harness.build_setup(cfg_damped)
        )
    )
    results.append(
        check_noise_statistics(
            setup.measure, setup.epsilon, setup.horizon,
            cfg.verify.get("noise_paths", 4000), setup.seed,
        )
    )
    results.append(
        check_forcing_contracts(
            setup.basis, setup.measure, setup.brownian_dim,
            samples=min(100, 2 * n_verify), seed=setup.seed,
        )
    )
    cfg_ito = cfg.replace(
        forcing={"name": "linear_damping",
                 "params": {"a_scale": 0.0, "b_scale": 0.0}},
        noise={"measure": "zero", "params": {}},
    )
    results.append(
        check_ito_isometry(
            harness.build_setup(cfg_ito), cfg.verify.get("ito_paths", 400)
        )
    )

    small_cfg = cfg.replace(ensemble={"n_paths": n_verify})
    report = harness.run_ensemble(small_cfg, setup)
    results.append(check_jensen_ordering(report))
    results.append(check_stopping_consistency(report, setup.stopping.threshold))
    results.append(check_seed_determinism(cfg, setup))

    all_passed = all(r.passed for r in results)
    return results, report, all_passed
