#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the NumPy fallback.

Times each hot kernel on representative sizes, then a full simulation path
under both backends.  Run from the repo root:

    python3 benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np

from levyflow import _kernels
from levyflow._kernels import numpy_backend


def _time(fn, *args, repeats=7):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels():
    try:
        cython = _kernels.get_backend("cython")
    except ImportError:
        print("compiled core not built; kernel comparison skipped")
        return

    rng = np.random.default_rng(0)
    rows = []

    for res, m in ((32, 1024), (64, 4096), (128, 16384)):
        field = rng.standard_normal((res, res))
        px = rng.uniform(0, res, size=m)
        py = rng.uniform(0, res, size=m)
        t_np = _time(numpy_backend.interp_cubic_clamped_2d, field, px, py, True)
        t_cy = _time(cython.interp_cubic_clamped_2d, field, px, py, True)
        rows.append((f"cubic_clamped_2d res={res} pts={m}", t_np, t_cy))

    res3 = 24
    field3 = rng.standard_normal((res3,) * 3)
    m3 = res3**3
    p3 = [rng.uniform(0, res3, size=m3) for _ in range(3)]
    t_np = _time(numpy_backend.interp_cubic_clamped_3d, field3, *p3, True)
    t_cy = _time(cython.interp_cubic_clamped_3d, field3, *p3, True)
    rows.append((f"cubic_clamped_3d res={res3} pts={m3}", t_np, t_cy))

    for n_modes, m in ((8, 1024), (16, 4096)):
        wavevecs = 2 * np.pi * rng.integers(-3, 4, (n_modes, 2)).astype(float)
        pol = rng.standard_normal((n_modes, 2))
        is_sin = rng.integers(0, 2, n_modes).astype(np.uint8)
        coeffs = rng.standard_normal(n_modes)
        pts = rng.random((m, 2))
        t_np = _time(numpy_backend.trig_velocity_eval, pts, wavevecs, pol,
                     is_sin, coeffs)
        t_cy = _time(cython.trig_velocity_eval, pts, wavevecs, pol, is_sin,
                     coeffs)
        rows.append((f"trig_velocity_eval n={n_modes} pts={m}", t_np, t_cy))

    print(f"{'kernel':45s} {'numpy':>10s} {'cython':>10s} {'speedup':>8s}")
    for name, t_np, t_cy in rows:
        print(f"{name:45s} {t_np * 1e6:9.1f}us {t_cy * 1e6:9.1f}us "
              f"{t_np / t_cy:7.1f}x")


PATH_SNIPPET = """
import time
import numpy as np
from levyflow import harness, _kernels
from levyflow.config import RunConfig

cfg = RunConfig.from_dict({
    "basis": {"n_modes": 8, "resolution": 32},
    "noise": {"measure": "uniform_ball",
              "params": {"rate": 3.0, "radius": 2.0, "mark_dim": 1},
              "epsilon": 0.05, "brownian_dim": 1},
    "forcing": {"name": "linear_damping", "params": {}},
    "initial": {"u0": {"type": "decay", "amplitude": 1.0, "exponent": 1.0},
                "rho0": {"type": "cosine", "m": 0.8, "M": 1.2}},
    "time": {"horizon": 1.0, "dt": 0.015625, "storage_stride": 4},
    "ensemble": {"n_paths": 1, "seed": 1, "theta_grid": []},
})
setup = harness.build_setup(cfg)
harness.simulate_path(setup, 0)  # warm up
t0 = time.perf_counter()
for i in range(10):
    harness.simulate_path(setup, i)
dt = (time.perf_counter() - t0) / 10
print(f"{_kernels.BACKEND_NAME}: {dt * 1000:.1f} ms/path (64 steps, n=8, res=32)")
"""


def bench_full_path():
    print("\nfull path benchmark (subprocess per backend):")
    for backend in ("python", "cython"):
        env = dict(os.environ, LEVYFLOW_BACKEND=backend)
        out = subprocess.run(
            [sys.executable, "-c", PATH_SNIPPET], env=env,
            capture_output=True, text=True,
        )
        if out.returncode != 0:
            print(f"{backend}: failed ({out.stderr.strip().splitlines()[-1]})")
        else:
            print(" ", out.stdout.strip())


if __name__ == "__main__":
    bench_kernels()
    bench_full_path()
