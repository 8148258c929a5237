"""Monte Carlo harness: path simulation, moment estimation, increment
statistics, stochastic-identity checks, and the explicit Gronwall bound.

A single :class:`ProblemSetup` holds the immutable pieces shared by all
paths (basis, measure, forcing, initial data).  Paths are deterministic
functions of ``(seed, path_index)`` and can run in worker processes
(``LEVYFLOW_WORKERS``); per-path statistics are reduced in path-index
order with NumPy's pairwise summation, so the report does not depend on
the scheduling.
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from .basis import CoefficientVector, build_basis
from .errors import BlowUpError, ConfigurationError, UsageError
from .forcing import builtin as forcing_builtin
from .galerkin import GalerkinSystem, PathHistory, SimulationState, step
from .noise import make_measure, sample_noise_path
from .transport import DensityField

# Universal martingale maximal-inequality constants (p = 1), set
# conservatively: continuous integrals (Davis) and compensated Poisson
# integrals (Lenglart-type domination by the predictable bracket).
BDG_CONTINUOUS_P1 = 4.0
BDG_JUMP_P1 = 8.0


# -- ledger and stopping ----------------------------------------------------


@dataclass
class EnergyLedger:
    """Per-path time series of the stopped-energy bookkeeping."""

    times: np.ndarray
    energy: np.ndarray  # ||sqrt(rho) u||^2 at each time
    grad: np.ndarray  # ||grad u||^2 at each time
    stopped_at: float = None
    jump_log: list = field(default_factory=list)  # per-jump norm increments
    max_substep_increment: float = 0.0

    def __post_init__(self):
        if len(self.times) != len(self.energy) or len(self.times) != len(self.grad):
            raise UsageError("ledger arrays must be aligned")


@dataclass(frozen=True)
class StoppingRule:
    """First-passage threshold on ||sqrt(rho) u||; observe or enforce."""

    threshold: float
    mode: str = "observe"  # "observe" | "enforce"

    def __post_init__(self):
        if self.threshold <= 0:
            raise ConfigurationError("stopping threshold must be positive")
        if self.mode not in ("observe", "enforce"):
            raise ConfigurationError("stopping mode must be 'observe' or 'enforce'")

    @property
    def enforce(self):
        return self.mode == "enforce"


def stopping_time(ledger, threshold):
    """First recorded time with sqrt(energy) >= threshold, else the horizon."""
    if len(ledger.times) == 0:
        raise UsageError("ledger is empty")
    hits = np.sqrt(np.maximum(ledger.energy, 0.0)) >= threshold
    if not hits.any():
        return float(ledger.times[-1])
    return float(ledger.times[int(np.argmax(hits))])


# -- problem setup -----------------------------------------------------------


def initial_coefficients(recipe, basis):
    kind = recipe.get("type", "zero")
    n = basis.n_modes
    if kind == "zero":
        return np.zeros(n)
    if kind == "fixed":
        vals = np.asarray(recipe["values"], dtype=float)
        if len(vals) != n:
            raise ConfigurationError(
                f"initial u0 'fixed' recipe has {len(vals)} values for {n} modes"
            )
        return vals
    if kind == "decay":
        amp = float(recipe.get("amplitude", 1.0))
        q = float(recipe.get("exponent", 1.0))
        return amp * (np.arange(1, n + 1, dtype=float) ** (-q))
    raise ConfigurationError(f"unknown u0 recipe type {kind!r}")


def initial_density(recipe, grid):
    kind = recipe.get("type", "constant")
    if kind == "constant":
        v = float(recipe.get("value", 1.0))
        return DensityField(np.full(grid.n_nodes, v), (v, v), grid)
    if kind == "cosine":
        m, M = float(recipe["m"]), float(recipe["M"])
        mid, amp = 0.5 * (m + M), 0.5 * (M - m)
        prof = np.ones(grid.n_nodes)
        for c in range(grid.d):
            prof = prof * np.cos(2.0 * np.pi * grid.coords[:, c])
        vals = np.clip(mid + amp * prof, m, M)  # shave float dust at extrema
        return DensityField(vals, (m, M), grid)
    raise ConfigurationError(f"unknown rho0 recipe type {kind!r}")


@dataclass
class ProblemSetup:
    """Everything shared by the paths of one ensemble."""

    basis: object
    dual_basis: object
    measure: object
    spec: object
    system: GalerkinSystem
    rho0: DensityField
    phi0: np.ndarray
    nu: float
    horizon: float
    dt: float
    n_base: int
    storage_stride: int
    epsilon: float
    brownian_dim: int
    stopping: StoppingRule
    seed: int

    @property
    def base_times(self):
        return np.linspace(0.0, self.horizon, self.n_base + 1)

    @property
    def dt_store(self):
        return self.dt * self.storage_stride

    def fresh_system(self):
        return dataclasses.replace(
            self.system, _mass=None, _mass_age=0, _mass_rho_id=None
        )

    def initial_energy(self):
        u0 = self.basis.eval_velocity(self.phi0)
        return self.basis.weighted_inner(u0, u0, weight=self.rho0)


def build_setup(cfg):
    """Assemble a ProblemSetup from a RunConfig (see levyflow.config)."""
    basis = build_basis(
        cfg.basis["provider"], cfg.basis["n_modes"], cfg.basis["resolution"],
        cfg.basis["d_space"], cache_dir=cfg.basis.get("cache_dir"),
    )
    dual_basis = None
    if cfg.ensemble.get("theta_grid"):
        k_dual = 2 * cfg.basis["n_modes"]
        dual_basis = build_basis(
            cfg.basis["provider"], 2 * k_dual, cfg.basis["resolution"],
            cfg.basis["d_space"], cache_dir=cfg.basis.get("cache_dir"),
        )
    measure = make_measure(cfg.noise["measure"], **cfg.noise.get("params", {}))
    spec = forcing_builtin(
        cfg.forcing["name"],
        measure=measure,
        grid=basis.grid,
        brownian_dim=cfg.noise["brownian_dim"],
        **cfg.forcing.get("params", {}),
    )
    system = GalerkinSystem.build(
        basis, cfg.nu, spec, measure, cfg.noise["epsilon"],
        mass_reuse_steps=cfg.scheme.get("mass_reuse_steps", 1),
    )
    rho0 = initial_density(cfg.initial["rho0"], basis.grid)
    phi0 = initial_coefficients(cfg.initial["u0"], basis)
    n_base = int(round(cfg.time["horizon"] / cfg.time["dt"]))
    return ProblemSetup(
        basis=basis,
        dual_basis=dual_basis,
        measure=measure,
        spec=spec,
        system=system,
        rho0=rho0,
        phi0=phi0,
        nu=cfg.nu,
        horizon=cfg.time["horizon"],
        dt=cfg.time["horizon"] / n_base,
        n_base=n_base,
        storage_stride=cfg.time["storage_stride"],
        epsilon=cfg.noise["epsilon"],
        brownian_dim=cfg.noise["brownian_dim"],
        stopping=StoppingRule(cfg.stopping["threshold"], cfg.stopping["mode"]),
        seed=cfg.ensemble["seed"],
    )


# -- single-path simulation ---------------------------------------------------


@dataclass
class PathResult:
    ledger: EnergyLedger
    aborted: bool
    dual_series: np.ndarray = None  # (S+1, K2) pairings <rho u, w_k>
    phi_series: np.ndarray = None  # (S+1, n)
    ito_mart: float = None
    ito_qv: float = None
    history: PathHistory = None
    jump_count: int = 0
    mass_drift_max: float = 0.0
    rho_min: float = np.inf
    rho_max: float = -np.inf


def simulate_path(setup, path_index, *, record_dual=False, record_history=False,
                  probe_ito=False, stream=None):
    """Run one path; deterministic given (setup.seed, path_index)."""
    basis = setup.basis
    system = setup.fresh_system()
    noise_path = sample_noise_path(
        setup.measure, setup.base_times, setup.epsilon, setup.brownian_dim,
        setup.seed, path_index,
    )
    state = SimulationState(
        0.0, setup.rho0, CoefficientVector(setup.phi0.copy())
    )
    stop = (setup.stopping.threshold, setup.stopping.enforce)

    m0 = system.mass_for(setup.rho0)
    times = [0.0]
    energies = [m0.energy(setup.phi0)]
    grads = [basis.grad_sq_norm(setup.phi0)]
    jump_log = []
    max_inc = 0.0
    jump_count = 0
    mass_drift_max = 0.0
    rho_min, rho_max = setup.rho0.min(), setup.rho0.max()

    store_idx = [0]
    duals = []
    phis = [setup.phi0.copy()]
    hist_rhos = [setup.rho0] if record_history else None
    hist_phis = [setup.phi0.copy()] if record_history else None
    if record_dual:
        duals.append(_dual_pairings(setup, setup.rho0, setup.phi0))
    ito_x, ito_y = 0.0, 0.0
    aborted = False

    for i in range(setup.n_base):
        try:
            state, rec = step(state, system, noise_path.slice(i), stopping=stop)
        except BlowUpError:
            aborted = True
            break
        times.append(rec.t)
        energies.append(rec.energy)
        grads.append(rec.grad_norm)
        jump_log.extend(rec.jump_increments)
        jump_count += rec.jump_count
        max_inc = max(max_inc, rec.max_substep_increment)
        mass_drift_max = max(
            mass_drift_max,
            abs(state.rho.mass() - setup.rho0.mass0) / max(abs(setup.rho0.mass0), 1e-300),
        )
        rho_min = min(rho_min, rec.rho_min)
        rho_max = max(rho_max, rec.rho_max)
        if probe_ito:
            for p_g_rows, dw, h in rec.gw_projection:
                for c in range(p_g_rows.shape[0]):
                    ito_x += p_g_rows[c, 0] * dw[c]
                    ito_y += h * p_g_rows[c, 0] ** 2
        if stream is not None:
            stream.write(json.dumps(rec.as_json_dict(), sort_keys=True) + "\n")
        if record_history:
            hist_rhos.append(state.rho)
            hist_phis.append(state.phi.phi.copy())
        if (i + 1) % setup.storage_stride == 0:
            store_idx.append(i + 1)
            phis.append(state.phi.phi.copy())
            if record_dual:
                duals.append(_dual_pairings(setup, state.rho, state.phi.phi))

    ledger = EnergyLedger(
        times=np.asarray(times),
        energy=np.asarray(energies),
        grad=np.asarray(grads),
        stopped_at=state.stopped_at,
        jump_log=jump_log,
        max_substep_increment=max_inc,
    )
    history = None
    if record_history and not aborted:
        history = PathHistory(
            times=np.asarray(times), phis=np.asarray(hist_phis),
            rhos=hist_rhos, noise_path=noise_path,
        )
    return PathResult(
        ledger=ledger,
        aborted=aborted,
        dual_series=np.asarray(duals) if record_dual and not aborted else None,
        phi_series=np.asarray(phis) if not aborted else None,
        ito_mart=ito_x if probe_ito else None,
        ito_qv=ito_y if probe_ito else None,
        history=history,
        jump_count=jump_count,
        mass_drift_max=mass_drift_max,
        rho_min=rho_min,
        rho_max=rho_max,
    )


def _dual_pairings(setup, rho, phi):
    u = setup.basis.eval_velocity(phi).values
    return setup.dual_basis.project(u, weight=rho)


# -- ensemble ------------------------------------------------------------------


@dataclass
class MomentEstimate:
    p: float
    sup_energy: float
    sup_energy_se: float
    grad_integral: float
    grad_integral_se: float


@dataclass
class EnsembleReport:
    n_paths: int
    seed: int
    aborted_fraction: float
    moment_estimates: list  # of MomentEstimate
    increment_table: list  # rows (theta, est, se) for rho*u in V'
    increment_table_u: list  # same dual proxy applied to u
    increment_table_bias: list  # rows (theta, est at K_dual, est at 2 K_dual)
    fitted_increment_exponent: float
    fitted_increment_ci: tuple
    fitted_increment_exponent_u: float
    gronwall_bounds: dict  # p -> bound on E sup ||sqrt(rho) u||^p
    stopped_fraction: float
    max_recorded_norm: float
    max_jump_increment: float
    max_substep_increment: float
    mean_jump_count: float
    neglected_jump_variance: float
    mass_drift_max: float
    rho_range: tuple

    def to_json_dict(self):
        return {
            "n_paths": self.n_paths,
            "seed": self.seed,
            "aborted_fraction": self.aborted_fraction,
            "moments": [
                {
                    "p": m.p,
                    "sup_energy": m.sup_energy,
                    "sup_energy_se": m.sup_energy_se,
                    "grad_integral": m.grad_integral,
                    "grad_integral_se": m.grad_integral_se,
                }
                for m in self.moment_estimates
            ],
            "increment_table": [list(r) for r in self.increment_table],
            "increment_table_u": [list(r) for r in self.increment_table_u],
            "increment_table_bias": [list(r) for r in self.increment_table_bias],
            "fitted_increment_exponent": self.fitted_increment_exponent,
            "fitted_increment_ci": list(self.fitted_increment_ci),
            "fitted_increment_exponent_u": self.fitted_increment_exponent_u,
            "gronwall_bounds": {
                str(k): {
                    "log10": v["log10"],
                    "value": v["value"] if np.isfinite(v["value"]) else None,
                }
                for k, v in self.gronwall_bounds.items()
            },
            "stopped_fraction": self.stopped_fraction,
            "max_recorded_norm": self.max_recorded_norm,
            "max_jump_increment": self.max_jump_increment,
            "max_substep_increment": self.max_substep_increment,
            "mean_jump_count": self.mean_jump_count,
            "neglected_jump_variance": self.neglected_jump_variance,
            "mass_drift_max": self.mass_drift_max,
            "rho_range": list(self.rho_range),
        }


@dataclass
class _PathStats:
    """Picklable per-path reduction payload."""

    sup_energy: float
    grad_integral: float
    dual_series: np.ndarray
    phi_series: np.ndarray
    aborted: bool
    stopped_at: float
    max_norm: float
    max_jump_inc: float
    max_substep_inc: float
    jump_count: int
    mass_drift_max: float
    rho_min: float
    rho_max: float


def _path_stats(setup, path_index, record_dual):
    res = simulate_path(setup, path_index, record_dual=record_dual)
    led = res.ledger
    if res.aborted:
        return _PathStats(np.nan, np.nan, None, None, True, led.stopped_at,
                          np.nan, np.nan, np.nan, res.jump_count,
                          res.mass_drift_max, res.rho_min, res.rho_max)
    sup_e = float(np.max(led.energy))
    grad_int = float(np.sum(np.diff(led.times) * led.grad[:-1]))
    return _PathStats(
        sup_energy=sup_e,
        grad_integral=grad_int,
        dual_series=res.dual_series,
        phi_series=res.phi_series if record_dual else None,
        aborted=False,
        stopped_at=led.stopped_at,
        max_norm=float(np.sqrt(np.max(led.energy))),
        max_jump_inc=float(max(np.abs(led.jump_log), default=0.0)),
        max_substep_inc=led.max_substep_increment,
        jump_count=res.jump_count,
        mass_drift_max=res.mass_drift_max,
        rho_min=res.rho_min,
        rho_max=res.rho_max,
    )


_WORKER_SETUP = None


def _worker_init(cfg_json):
    global _WORKER_SETUP
    from .config import RunConfig

    _WORKER_SETUP = build_setup(RunConfig.from_json(cfg_json))


def _worker_run(args):
    idx, record_dual = args
    return _path_stats(_WORKER_SETUP, idx, record_dual)


def run_ensemble(cfg, setup=None):
    """Run the configured Monte Carlo ensemble and reduce the statistics.

    Deterministic given the config (seed included); path results are
    reduced in index order regardless of worker scheduling.
    """
    setup = setup if setup is not None else build_setup(cfg)
    n_paths = cfg.ensemble["n_paths"]
    p_list = list(cfg.ensemble.get("p_moments", [2, 4]))
    theta_grid = list(cfg.ensemble.get("theta_grid", []))
    record_dual = bool(theta_grid)

    workers = int(os.environ.get("LEVYFLOW_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init, initargs=(cfg.to_json(),)
        ) as pool:
            stats = list(pool.map(_worker_run,
                                  [(i, record_dual) for i in range(n_paths)],
                                  chunksize=max(1, n_paths // (4 * workers))))
    else:
        stats = [_path_stats(setup, i, record_dual) for i in range(n_paths)]

    ok = [s for s in stats if not s.aborted]
    aborted_fraction = 1.0 - len(ok) / n_paths
    if not ok:
        raise ConfigurationError("every path blew up; check the configuration")

    sup_e = np.array([s.sup_energy for s in ok])
    grad_i = np.array([s.grad_integral for s in ok])
    moments = []
    for p in p_list:
        xs = sup_e ** (p / 2.0)
        ys = grad_i**p
        moments.append(
            MomentEstimate(
                p=p,
                sup_energy=float(np.mean(xs)),
                sup_energy_se=float(np.std(xs, ddof=1) / np.sqrt(len(xs)))
                if len(xs) > 1 else 0.0,
                grad_integral=float(np.mean(ys)),
                grad_integral_se=float(np.std(ys, ddof=1) / np.sqrt(len(ys)))
                if len(ys) > 1 else 0.0,
            )
        )

    inc_table, inc_table_u, inc_bias = [], [], []
    slope, ci, slope_u = float("nan"), (float("nan"), float("nan")), float("nan")
    if record_dual:
        k_dual = 2 * setup.basis.n_modes
        lam_dual = setup.dual_basis.eigenvalues
        series = [s.dual_series for s in ok]
        # u-pairings <u, w_k> equal phi_k exactly (orthonormal modes), so
        # the coefficient series is the documented dual-norm proxy for the
        # u-increments
        series_u = [s.phi_series for s in ok]
        lam_u = setup.basis.eigenvalues
        for theta in theta_grid:
            est, se = increment_statistic(
                series, lam_dual, theta, setup.dt_store, k_dual=k_dual
            )
            est2, _ = increment_statistic(
                series, lam_dual, theta, setup.dt_store, k_dual=2 * k_dual
            )
            inc_table.append((theta, est, se))
            inc_bias.append((theta, est, est2))
            est_u, se_u = increment_statistic(
                series_u, lam_u, theta, setup.dt_store
            )
            inc_table_u.append((theta, est_u, se_u))
        slope, ci = fit_increment_exponent(inc_table)
        slope_u, _ = fit_increment_exponent(inc_table_u)

    e0 = setup.initial_energy()
    gron = {}
    for p in p_list:
        gi = gronwall_inputs_from(setup, e0)
        gron[p] = {
            "value": gronwall_comparator(gi, p=p),
            "log10": gronwall_log10_bound(gi, p=p),
        }

    return EnsembleReport(
        n_paths=n_paths,
        seed=setup.seed,
        aborted_fraction=aborted_fraction,
        moment_estimates=moments,
        increment_table=inc_table,
        increment_table_u=inc_table_u,
        increment_table_bias=inc_bias,
        fitted_increment_exponent=slope,
        fitted_increment_ci=ci,
        fitted_increment_exponent_u=slope_u,
        gronwall_bounds=gron,
        stopped_fraction=float(
            np.mean([s.stopped_at is not None for s in ok])
        ),
        max_recorded_norm=float(np.max([s.max_norm for s in ok])),
        max_jump_increment=float(np.max([s.max_jump_inc for s in ok])),
        max_substep_increment=float(np.max([s.max_substep_inc for s in ok])),
        mean_jump_count=float(np.mean([s.jump_count for s in stats])),
        neglected_jump_variance=setup.measure.neglected_variance(setup.epsilon),
        mass_drift_max=float(np.max([s.mass_drift_max for s in stats])),
        rho_range=(
            float(np.min([s.rho_min for s in stats])),
            float(np.max([s.rho_max for s in stats])),
        ),
    )


# -- increment statistics -------------------------------------------------------


def increment_statistic(dual_series, eigenvalues, theta, dt_store, k_dual=None):
    """MC estimate of E integral(||h(t+theta) - h(t)||_{V'}^2, 0..T-theta).

    ``dual_series`` holds per-path arrays (S+1, K) of pairings <h, w_k>;
    the dual norm is sum_k <h, w_k>^2 / (1 + lambda_k) truncated at
    ``k_dual`` modes.  ``theta`` must be a multiple of ``dt_store``.
    """
    j = int(round(theta / dt_store))
    if abs(j * dt_store - theta) > 1e-9 * max(dt_store, 1.0):
        raise UsageError(
            f"theta={theta} is not on the storage grid (step {dt_store})"
        )
    if j == 0:
        return 0.0, 0.0
    k = k_dual if k_dual is not None else dual_series[0].shape[1]
    k = min(k, dual_series[0].shape[1])
    w = 1.0 / (1.0 + eigenvalues[:k])
    per_path = []
    for c in dual_series:
        if j >= c.shape[0]:
            raise UsageError("theta exceeds the stored horizon")
        diff = c[j:, :k] - c[:-j, :k]
        vals = (diff * diff) @ w
        # left-point rule on [0, T - theta]
        integral = float(np.sum(vals[:-1])) if len(vals) > 1 else 0.0
        per_path.append(dt_store * integral)
    per_path = np.asarray(per_path)
    se = float(np.std(per_path, ddof=1) / np.sqrt(len(per_path))) if len(per_path) > 1 else 0.0
    return float(np.mean(per_path)), se


def fit_increment_exponent(table, confidence=0.95):
    """Log-log OLS slope of the increment statistic against theta."""
    pts = [(t, e) for t, e, _ in table if e > 0]
    if len(pts) < 2:
        return float("nan"), (float("nan"), float("nan"))
    lx = np.log([t for t, _ in pts])
    ly = np.log([e for _, e in pts])
    res = sstats.linregress(lx, ly)
    if len(pts) > 2:
        halfwidth = sstats.t.ppf(0.5 + confidence / 2.0, len(pts) - 2) * res.stderr
    else:
        halfwidth = float("inf")
    return float(res.slope), (float(res.slope - halfwidth), float(res.slope + halfwidth))


# -- Ito isometry --------------------------------------------------------------


@dataclass
class IsometryReport:
    lhs: float  # E |int <rho g, w_1> dW|^2
    lhs_se: float
    rhs: float  # E int sum_i <rho g_i, w_1>^2 ds
    rhs_se: float
    pooled_se: float
    passed: bool

    def summary(self):
        return (
            f"Ito isometry: E|M_T|^2 = {self.lhs:.6g} (+-{self.lhs_se:.2g}) vs "
            f"E<M>_T = {self.rhs:.6g} (+-{self.rhs_se:.2g}); "
            f"|diff| = {abs(self.lhs - self.rhs):.3g} <= 3*{self.pooled_se:.3g}: "
            f"{self.passed}"
        )


def ito_isometry_check(setup, n_paths):
    """Compare the two MC estimates of the Brownian-integral second moment.

    Requires a g-only forcing (no jump maps) for the clean identity.
    """
    xs, ys = [], []
    for i in range(n_paths):
        res = simulate_path(setup, i, probe_ito=True)
        if res.aborted:
            continue
        xs.append(res.ito_mart**2)
        ys.append(res.ito_qv)
    xs, ys = np.asarray(xs), np.asarray(ys)
    lhs, rhs = float(np.mean(xs)), float(np.mean(ys))
    lhs_se = float(np.std(xs, ddof=1) / np.sqrt(len(xs))) if len(xs) > 1 else 0.0
    rhs_se = float(np.std(ys, ddof=1) / np.sqrt(len(ys))) if len(ys) > 1 else 0.0
    pooled = float(np.hypot(lhs_se, rhs_se))
    passed = abs(lhs - rhs) <= 3.0 * pooled + 1e-14
    return IsometryReport(lhs, lhs_se, rhs, rhs_se, pooled, passed)


# -- Gronwall comparator --------------------------------------------------------


@dataclass(frozen=True)
class GronwallInputs:
    """Constants feeding the explicit a-priori energy bound."""

    e0: float  # ||sqrt(rho0) u0||^2
    m: float
    M: float
    nu: float
    T: float
    growth_fg: float  # growth constant of f and of the g tuple
    jump_moment: dict  # p -> mark-integrated p-th moment growth constant
    large_mass: float  # mu(|z| >= 1)


def gronwall_inputs_from(setup, e0=None):
    spec = setup.spec
    return GronwallInputs(
        e0=setup.initial_energy() if e0 is None else e0,
        m=setup.rho0.bounds[0],
        M=setup.rho0.bounds[1],
        nu=setup.nu,
        T=setup.horizon,
        growth_fg=spec.declared_growth,
        jump_moment=dict(spec.declared_jump_moment),
        large_mass=setup.measure.large_total,
    )


def _young_coefficient(eps, q):
    """C with a*b <= eps*a^q + C*b^r, 1/q + 1/r = 1, a, b >= 0."""
    r = q / (q - 1.0)
    return (q * eps) ** (-r / q) / r


def _taylor_constant(p):
    """C(p) with | |a+b|^p - |a|^p - p|a|^(p-2)<a,b> | <=
    C(p) (|a|^(p-2)|b|^2 + |b|^p) in a Hilbert space.

    The worst case is colinear, so the constant is a 1-D supremum,
    evaluated numerically with a safety factor; the analytic t -> 0 limit
    p(p-1)/2 is included directly to dodge cancellation noise.
    """
    t = np.concatenate([np.linspace(1e-3, 1.0, 20000),
                        np.geomspace(1.0, 1e6, 20000)])
    plus = np.abs((1.0 + t) ** p - 1.0 - p * t) / (t**2 + t**p)
    minus = np.abs(np.abs(1.0 - t) ** p - 1.0 + p * t) / (t**2 + t**p)
    limit0 = p * (p - 1.0) / 2.0
    return 1.01 * float(max(plus.max(), minus.max(), limit0))


def gronwall_comparator(inputs, p=2):
    """Explicit upper bound on E sup_[0,T] ||sqrt(rho) u||^p assembled from
    the declared forcing constants and the density bounds.

    Every additive term contributes (sup-absorption coefficient, constant
    rate, linear rate); terms whose driving constants vanish contribute
    nothing, so trivial configurations give the bare initial energy.
    Driven configurations can produce bounds beyond float range; use
    :func:`gronwall_log10_bound` for overflow-free comparisons.
    """
    log_bound = gronwall_log_bound(inputs, p)
    with np.errstate(over="ignore"):
        return float(np.exp(log_bound))


def gronwall_log10_bound(inputs, p=2):
    return gronwall_log_bound(inputs, p) / np.log(10.0)


def gronwall_log_bound(inputs, p=2):
    if p == 2:
        return _gronwall_p2(inputs)
    if p < 2:
        raise UsageError("gronwall comparator needs p >= 2")
    return _gronwall_p(inputs, p)


def _gronwall_p2(c):
    m, M, T = c.m, c.M, c.T
    Cfg = c.growth_fg
    CB2 = c.jump_moment.get(2, 0.0)
    CB4 = c.jump_moment.get(4, 0.0)
    Cmu = c.large_mass
    sup_coef = 0.0
    alpha = 0.0  # constant rate
    beta = 0.0  # linear rate
    extra0 = 0.0  # additive constants from Young splits

    if Cfg > 0:
        rtM = np.sqrt(M)
        # deterministic drift f
        alpha += rtM * Cfg
        beta += rtM * Cfg * (1.0 + 2.0 / np.sqrt(m))
        # Ito correction of g
        alpha += 2.0 * M * Cfg**2
        beta += 2.0 * M * Cfg**2 / m
        # Brownian martingale sup (Davis + Young, sup coefficient 1/4)
        C1 = BDG_CONTINUOUS_P1
        sup_coef += 0.25
        alpha += 8.0 * C1**2 * M * Cfg**2
        beta += 8.0 * C1**2 * M * Cfg**2 / m

    if CB2 > 0:
        CJ = BDG_JUMP_P1
        # mean drift of the uncompensated large-jump term
        if Cmu > 0:
            root = np.sqrt(M * Cmu * CB2)
            alpha += root
            beta += root * (1.0 + 2.0 / np.sqrt(m))
        # compensated jump martingales (small and large mirror each other):
        # linear piece, sup coefficient 1/8 each
        sup_coef += 2 * 0.125
        alpha += 2 * 8.0 * CJ**2 * M * CB2
        beta += 2 * 8.0 * CJ**2 * M * CB2 / m
        # quadratic piece via the p=4 mark moment, sup coefficient 1/8 each
        if CB4 > 0:
            sup_coef += 2 * 0.125
            extra0 += 2 * m / 8.0
            alpha += 2 * 2.0 * CJ**2 * M**2 * CB4 / m
            beta += 2 * 2.0 * CJ**2 * M**2 * CB4 / m**2
        # compensator mean terms
        alpha += M * CB2
        beta += M * CB2 / m

    left = 1.0 - sup_coef
    if left <= 0:
        raise ConfigurationError("Gronwall absorption failed; internal error")
    head = (c.e0 + extra0 + alpha * T) / left
    with np.errstate(divide="ignore"):
        return float(np.log(head) + beta * T / left)


def _gronwall_p(c, p):
    m, M, T = c.m, c.M, c.T
    Cfg = c.growth_fg
    CB2 = c.jump_moment.get(2, 0.0)
    CBp = c.jump_moment.get(p, 0.0)
    Cmu = c.large_mass
    mp = m ** (p / 2.0)
    sup_coef = 0.0
    alpha = 0.0
    beta = 0.0

    # (integral of (1 + e/m) ds)^(p/2) <= (2T)^(p/2-1) integral(1 + y/mp)
    fold = (2.0 * T) ** (p / 2.0 - 1.0)

    if Cfg > 0:
        rtM = np.sqrt(M)
        # drift f
        alpha += p * rtM * Cfg
        beta += p * rtM * Cfg * (1.0 + 1.0 / np.sqrt(m))
        # Ito corrections of g
        coef = (p / 2.0 + (p / 2.0) * (p / 2.0 - 1.0)) * 2.0 * M * Cfg**2
        alpha += coef
        beta += coef * (1.0 + 1.0 / m)
        # Brownian martingale sup: D*a*b <= eps*sup_y + C_eps*(D*b)^p fold
        D = BDG_CONTINUOUS_P1 * p * np.sqrt(2.0 * M * Cfg**2)
        ce = _young_coefficient(0.125, p / (p - 1.0))
        K = ce * D**p * fold
        sup_coef += 0.125
        alpha += K
        beta += K / mp

    if CB2 > 0 and CBp > 0:
        Ct = _taylor_constant(p)
        # uncompensated large jumps
        alpha += 2.0 ** (p - 1.0) * M ** (p / 2.0) * CBp
        beta += 2.0 ** (p - 1.0) * (Cmu + M ** (p / 2.0) * CBp / mp)
        # Taylor remainder, p-th power piece
        alpha += Ct * M ** (p / 2.0) * CBp
        beta += Ct * M ** (p / 2.0) * CBp / mp
        # Taylor remainder, quadratic piece
        ce = _young_coefficient(0.125, p / (p - 2.0)) if p > 2 else 0.0
        if p > 2:
            K = ce * (Ct * M * CB2) ** (p / 2.0) * fold
            sup_coef += 0.125
            alpha += K
            beta += K / mp
        # compensated small-jump martingale sup
        D = BDG_JUMP_P1 * p * np.sqrt(M * CB2)
        ce = _young_coefficient(0.125, p / (p - 1.0))
        K = ce * D**p * fold
        sup_coef += 0.125
        alpha += K
        beta += K / mp

    left = 1.0 - sup_coef
    if left <= 0:
        raise ConfigurationError("Gronwall absorption failed; internal error")
    e0p = c.e0 ** (p / 2.0)
    head = (e0p + alpha * T) / left
    with np.errstate(divide="ignore"):
        return float(np.log(head) + beta * T / left)
