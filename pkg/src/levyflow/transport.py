"""Density transport by bound-preserving semi-Lagrangian advection.

The velocity is frozen over each slice (matching the stepper's structure),
departure points are found with a midpoint step, and the density is
interpolated there with clamped Catmull-Rom, which cannot create new
extrema: the pointwise min/max of the density can only shrink.  Because
semi-Lagrangian transport is not conservative, the small mass drift is
repaired each step by a bounded redistribution that provably stays inside
the current [min, max] envelope while restoring the recorded total mass
exactly.

Velocity at off-grid departure points comes from a caller-supplied point
evaluator (the spectral expansion, exact on the torus) or from multilinear
interpolation of the grid samples (the box domain).
"""

from __future__ import annotations

from dataclasses import dataclass
import json
from pathlib import Path

import numpy as np

from . import _kernels
from .basis import Grid, GridField
from .errors import ConfigurationError, NumericalError, UsageError


@dataclass
class DensityField:
    """Positive scalar samples with certified bounds and recorded mass."""

    values: np.ndarray
    bounds: tuple
    grid: Grid
    mass0: float = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        m, M = self.bounds
        if not 0.0 < m <= M:
            raise ConfigurationError(f"density bounds must satisfy 0 < m <= M, got {self.bounds}")
        if self.values.min() < m - 1e-12 or self.values.max() > M + 1e-12:
            raise ConfigurationError(
                f"density samples [{self.values.min():.6g}, {self.values.max():.6g}] "
                f"violate certified bounds {self.bounds}"
            )
        if self.mass0 is None:
            self.mass0 = self.mass()

    def mass(self):
        return float(np.dot(self.grid.weights, self.values))

    def min(self):
        return float(self.values.min())

    def max(self):
        return float(self.values.max())


def _interp_clamped(values_nd, dep_idx, periodic):
    d = dep_idx.shape[1]
    cols = [np.ascontiguousarray(dep_idx[:, a]) for a in range(d)]
    f = np.ascontiguousarray(values_nd)
    if d == 2:
        return _kernels.interp_cubic_clamped_2d(f, cols[0], cols[1], periodic)
    if d == 3:
        return _kernels.interp_cubic_clamped_3d(f, cols[0], cols[1], cols[2], periodic)
    raise UsageError(f"unsupported dimension {d}")


def _interp_linear_vec(field_nd_components, dep_idx, periodic):
    d = dep_idx.shape[1]
    cols = [np.ascontiguousarray(dep_idx[:, a]) for a in range(d)]
    out = np.empty((len(field_nd_components), dep_idx.shape[0]))
    for c, comp in enumerate(field_nd_components):
        f = np.ascontiguousarray(comp)
        if d == 2:
            out[c] = _kernels.interp_linear_2d(f, cols[0], cols[1], periodic)
        else:
            out[c] = _kernels.interp_linear_3d(f, cols[0], cols[1], cols[2], periodic)
    return out


def _departure_points(grid, velocity_values, dt, point_eval):
    """Midpoint departure points in fractional index coordinates."""
    h = grid.spacing
    coords = grid.coords  # (N, d)
    u0 = velocity_values.T  # (N, d)
    mid = coords - 0.5 * dt * u0
    if point_eval is not None:
        u_mid = point_eval(_wrap_coords(mid, grid))
    else:
        comps = [velocity_values[c].reshape(grid.shape) for c in range(grid.d)]
        u_mid = _interp_linear_vec(comps, mid / h, grid.periodic).T
    dep = coords - dt * u_mid
    dep_idx = dep / h
    if not grid.periodic:
        n = grid.shape[0]
        over = max(float(-dep_idx.min(initial=0.0)), float(dep_idx.max(initial=0.0) - (n - 1)))
        if over > 1.0:
            raise ConfigurationError(
                f"departure points leave the box by {over:.3g} cells; "
                "resolution too coarse for |u|*dt"
            )
    return dep_idx


def _wrap_coords(points, grid):
    return np.mod(points, 1.0) if grid.periodic else np.clip(points, 0.0, 1.0)


def _restore_mass(values, weights, target, lo, hi):
    """Bounded redistribution: move the mass deficit into the headroom
    toward lo/hi so clamped bounds are preserved exactly."""
    deficit = target - float(np.dot(weights, values))
    if deficit == 0.0:
        return values
    if deficit > 0.0:
        head = hi - values
    else:
        head = values - lo
    cap = float(np.dot(weights, head))
    if cap <= 0.0:
        if abs(deficit) <= 1e-12 * max(abs(target), 1.0):
            return values
        raise NumericalError(
            f"cannot restore mass: deficit {deficit:.3g} exceeds headroom"
        )
    alpha = deficit / cap
    if abs(alpha) > 1.0:
        raise NumericalError(
            f"mass correction {alpha:.3g} exceeds headroom; scheme failure"
        )
    return values + alpha * head


def advance_density(rho, velocity, dt, point_eval=None):
    """One transport step of the density by the frozen velocity.

    ``velocity`` is a vector GridField on rho's grid; ``point_eval``
    optionally evaluates the same velocity at arbitrary physical points
    (used for the midpoint departure stage).  The output's certified
    bounds equal the input's; min/max can only shrink; total mass is
    restored to the recorded value exactly.
    """
    if dt <= 0:
        raise UsageError("dt must be positive")
    grid = rho.grid
    if not isinstance(velocity, GridField) or velocity.values.shape != (grid.d, grid.n_nodes):
        raise UsageError("velocity must be a vector GridField on the density grid")

    vals = velocity.values
    if not vals.any():
        return DensityField(rho.values.copy(), rho.bounds, grid, mass0=rho.mass0)

    dep_idx = _departure_points(grid, vals, dt, point_eval)
    new_vals = _interp_clamped(rho.values.reshape(grid.shape), dep_idx, grid.periodic)
    new_vals = _restore_mass(
        new_vals, grid.weights, rho.mass0, float(rho.values.min()), float(rho.values.max())
    )
    return DensityField(new_vals, rho.bounds, grid, mass0=rho.mass0)


@dataclass
class ReciprocalReport:
    """Consistency of transporting rho and 1/rho with the same scheme."""

    max_deviation: float
    per_step: np.ndarray

    def summary(self):
        return (
            f"reciprocal transport check: max |rho * (1/rho) - 1| = "
            f"{self.max_deviation:.3e} over {len(self.per_step)} steps"
        )


def reciprocal_check(rho0, steps, rho_path):
    """Advance 1/rho0 with the recorded velocity path and compare.

    ``steps`` is an iterable of (velocity GridField, dt, point_eval or
    None); ``rho_path`` the recorded densities after each step.  Reports
    max |rho_scheme * (1/rho)_scheme - 1| over grid and time.
    """
    m, M = rho0.bounds
    inv = DensityField(1.0 / rho0.values, (1.0 / M, 1.0 / m), rho0.grid)
    devs = []
    for (velocity, dt, point_eval), rho_ref in zip(steps, rho_path):
        inv = advance_density(inv, velocity, dt, point_eval=point_eval)
        devs.append(float(np.abs(rho_ref.values * inv.values - 1.0).max()))
    per_step = np.asarray(devs)
    return ReciprocalReport(
        max_deviation=float(per_step.max(initial=0.0)), per_step=per_step
    )


SNAPSHOT_FORMAT_VERSION = 1


def write_density_snapshot(rho, path_base):
    """Write raw float64 grid values plus a JSON sidecar descriptor.

    Suffixes are appended (not substituted), so base names may contain
    dots, e.g. ``density_t0.125``.
    """
    base = Path(path_base)
    base.parent.mkdir(parents=True, exist_ok=True)
    bin_path = Path(str(base) + ".bin")
    json_path = Path(str(base) + ".json")
    rho.values.astype("<f8").tofile(bin_path)
    sidecar = {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "dtype": "<f8",
        "shape": list(rho.grid.shape),
        "spacing": rho.grid.spacing,
        "periodic": rho.grid.periodic,
        "bounds": list(rho.bounds),
        "mass": rho.mass(),
    }
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    return bin_path, json_path


def read_density_snapshot(path_base, grid):
    base = Path(path_base)
    with open(str(base) + ".json") as fh:
        sidecar = json.load(fh)
    if sidecar["format_version"] != SNAPSHOT_FORMAT_VERSION:
        raise ConfigurationError(
            f"snapshot format version {sidecar['format_version']} unsupported"
        )
    values = np.fromfile(str(base) + ".bin", dtype=sidecar["dtype"])
    if tuple(sidecar["shape"]) != grid.shape:
        raise UsageError("snapshot grid does not match the supplied grid")
    return DensityField(values, tuple(sidecar["bounds"]), grid)
