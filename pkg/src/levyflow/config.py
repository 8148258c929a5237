"""Run configuration: YAML parsing, defaults, and collected validation.

``parse_config`` reads a YAML key tree, fills documented defaults, and
validates every invariant, reporting all violations together rather than
stopping at the first.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import yaml

from .basis import PROVIDERS
from .errors import ConfigurationError
from .noise import MEASURE_CATALOG

FORCING_NAMES = ("zero", "linear_damping", "bounded_saturation", "jump_scaled")

MEASURE_DEFAULT_PARAMS = {
    "zero": {},
    "uniform_ball": {"rate": 2.0, "radius": 2.0, "mark_dim": 1},
    "tempered_power_law": {"c": 0.05, "alpha": 0.8, "mark_dim": 1},
}

DEFAULTS = {
    "basis": {"provider": "torus_fourier", "n_modes": 8, "resolution": 32,
              "d_space": 2, "cache_dir": None},
    "noise": {"measure": "uniform_ball", "params": None,
              "epsilon": 0.01, "brownian_dim": 1},
    "forcing": {"name": "linear_damping", "params": {}},
    "initial": {"u0": {"type": "decay", "amplitude": 1.0, "exponent": 1.0},
                "rho0": {"type": "cosine", "m": 0.8, "M": 1.2}},
    "time": {"horizon": 1.0, "dt": 0.015625, "storage_stride": 4},
    "ensemble": {"n_paths": 100, "seed": 20240611, "p_moments": [2, 4],
                 "theta_grid": [0.0625, 0.125, 0.25]},
    "stopping": {"threshold": 50.0, "mode": "observe"},
    "nu": 0.1,
    "scheme": {"mass_reuse_steps": 1},
    "verify": {"paths": 64, "noise_paths": 4000, "ito_paths": 400},
    "output": {"directory": "runs/out", "formats": ["json", "csv"],
               "trajectories": "none", "snapshot_times": []},
}


def _deep_merge(base, override):
    """Key-tree merge; ``params`` tables are replaced wholesale (parameter
    names are catalog-specific, so merging them across a catalog switch
    would leak foreign keys)."""
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if key != "params" and isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class RunConfig:
    """Validated run configuration (plain data, picklable, serializable)."""

    basis: dict
    noise: dict
    forcing: dict
    initial: dict
    time: dict
    ensemble: dict
    stopping: dict
    nu: float
    scheme: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw, validate=True):
        merged = _deep_merge(DEFAULTS, raw or {})
        if merged["noise"].get("params") is None:
            merged["noise"]["params"] = copy.deepcopy(
                MEASURE_DEFAULT_PARAMS.get(merged["noise"].get("measure"), {})
            )
        if merged["forcing"].get("params") is None:
            merged["forcing"]["params"] = {}
        cfg = cls(
            basis=merged["basis"],
            noise=merged["noise"],
            forcing=merged["forcing"],
            initial=merged["initial"],
            time=merged["time"],
            ensemble=merged["ensemble"],
            stopping=merged["stopping"],
            nu=merged["nu"],
            scheme=merged["scheme"],
            verify=merged["verify"],
            output=merged["output"],
        )
        if validate:
            problems = cfg.problems()
            if problems:
                raise ConfigurationError(problems)
        return cfg

    def to_dict(self):
        return {
            "basis": self.basis,
            "noise": self.noise,
            "forcing": self.forcing,
            "initial": self.initial,
            "time": self.time,
            "ensemble": self.ensemble,
            "stopping": self.stopping,
            "nu": self.nu,
            "scheme": self.scheme,
            "verify": self.verify,
            "output": self.output,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def replace(self, **section_updates):
        """Derived config with section updates merged in.  Switching a
        catalog name (noise.measure / forcing.name) without supplying
        params resets the params table to that catalog's defaults."""
        raw = self.to_dict()
        for section, name_key in (("noise", "measure"), ("forcing", "name")):
            upd = section_updates.get(section)
            if isinstance(upd, dict) and name_key in upd and "params" not in upd:
                upd = dict(upd)
                upd["params"] = None
                section_updates[section] = upd
        merged = _deep_merge(raw, section_updates)
        if merged["noise"].get("params") is None:
            merged["noise"]["params"] = None  # from_dict fills defaults
        return RunConfig.from_dict(merged)

    def problems(self):
        """All invariant violations, each naming the offending key."""
        probs = []
        b = self.basis
        if b.get("provider") not in PROVIDERS:
            probs.append(
                f"basis.provider: unknown {b.get('provider')!r}; available: "
                + ", ".join(PROVIDERS)
            )
        if not isinstance(b.get("n_modes"), int) or b["n_modes"] < 1:
            probs.append("basis.n_modes: must be an integer >= 1")
        if not isinstance(b.get("resolution"), int) or b["resolution"] < 4:
            probs.append("basis.resolution: must be an integer >= 4")
        if b.get("d_space") not in (2, 3):
            probs.append("basis.d_space: must be 2 or 3")

        nz = self.noise
        if nz.get("measure") not in MEASURE_CATALOG:
            probs.append(
                f"noise.measure: unknown {nz.get('measure')!r}; available: "
                + ", ".join(sorted(MEASURE_CATALOG))
            )
        eps = nz.get("epsilon")
        if not isinstance(eps, (int, float)) or not 0.0 < eps < 1.0:
            probs.append("noise.epsilon: truncation level must lie in (0, 1)")
        if not isinstance(nz.get("brownian_dim"), int) or nz["brownian_dim"] < 1:
            probs.append("noise.brownian_dim: must be an integer >= 1")

        if self.forcing.get("name") not in FORCING_NAMES:
            probs.append(
                f"forcing.name: unknown {self.forcing.get('name')!r}; available: "
                + ", ".join(FORCING_NAMES)
            )

        rho0 = self.initial.get("rho0", {})
        if rho0.get("type") == "cosine":
            m, M = rho0.get("m"), rho0.get("M")
            if not (isinstance(m, (int, float)) and isinstance(M, (int, float))
                    and 0.0 < m <= M):
                probs.append(
                    "initial.rho0: requires 0 < m <= M (density bounded away "
                    f"from zero); got m={m}, M={M}"
                )
        elif rho0.get("type") == "constant":
            if not (isinstance(rho0.get("value"), (int, float)) and rho0["value"] > 0):
                probs.append("initial.rho0.value: must be positive")

        t = self.time
        horizon, dt = t.get("horizon"), t.get("dt")
        if not (isinstance(horizon, (int, float)) and horizon > 0):
            probs.append("time.horizon: must be positive")
        if not (isinstance(dt, (int, float)) and dt > 0):
            probs.append("time.dt: must be positive")
        stride = t.get("storage_stride")
        n_base = None
        if isinstance(horizon, (int, float)) and isinstance(dt, (int, float)) \
                and horizon > 0 and dt > 0:
            n_base = horizon / dt
            if abs(n_base - round(n_base)) > 1e-9:
                probs.append("time.dt: horizon must be an integer number of steps")
            n_base = int(round(n_base))
        if not isinstance(stride, int) or stride < 1:
            probs.append("time.storage_stride: must be an integer >= 1")
        elif n_base is not None and n_base % stride != 0:
            probs.append(
                f"time.storage_stride: {stride} does not divide the "
                f"{n_base}-step base grid"
            )

        e = self.ensemble
        if not isinstance(e.get("n_paths"), int) or e["n_paths"] < 1:
            probs.append("ensemble.n_paths: must be an integer >= 1")
        for p in e.get("p_moments", []):
            if p < 2:
                probs.append(f"ensemble.p_moments: p={p} must be >= 2")
        if n_base is not None and isinstance(stride, int) and stride >= 1 \
                and isinstance(dt, (int, float)) and dt > 0:
            dt_store = dt * stride
            store_grid = [i * dt_store for i in range(n_base // stride + 1)]
            for theta in e.get("theta_grid", []):
                ratio = theta / dt_store
                if abs(ratio - round(ratio)) > 1e-9 or not 0 <= theta <= horizon:
                    probs.append(
                        f"ensemble.theta_grid: theta={theta} not on the storage "
                        f"grid (step {dt_store}, grid 0..{store_grid[-1]})"
                    )

        s = self.stopping
        if not (isinstance(s.get("threshold"), (int, float)) and s["threshold"] > 0):
            probs.append("stopping.threshold: must be positive")
        if s.get("mode") not in ("observe", "enforce"):
            probs.append("stopping.mode: must be 'observe' or 'enforce'")

        if not (isinstance(self.nu, (int, float)) and self.nu > 0):
            probs.append("nu: viscosity must be positive")

        if self.output.get("trajectories") not in ("none", "first", "all"):
            probs.append("output.trajectories: must be 'none', 'first', or 'all'")
        if isinstance(horizon, (int, float)) and isinstance(dt, (int, float)) \
                and horizon > 0 and dt > 0:
            for ts in self.output.get("snapshot_times", []):
                ratio = ts / dt
                if abs(ratio - round(ratio)) > 1e-9 or not 0 <= ts <= horizon:
                    probs.append(
                        f"output.snapshot_times: t={ts} not on the base grid "
                        f"(step {dt}, horizon {horizon})"
                    )
        return probs


def parse_config(path):
    """Read and validate a YAML run configuration file."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config file {path} is not a key tree")
    return RunConfig.from_dict(raw)
