"""Kernel backend selection.

The compiled extension (``levyflow._kernels._core``) is preferred when it
imports cleanly; otherwise the NumPy fallback is used.  Override with the
environment variable ``LEVYFLOW_BACKEND``:

* ``auto``   -- compiled if available, else NumPy (default)
* ``cython`` -- require the compiled core (ImportError if missing)
* ``python`` -- force the NumPy fallback

Both backends expose the same functions; ``tests/test_kernels.py`` checks
them against each other and ``benchmarks/bench_kernels.py`` compares speed.
"""

import os

from . import numpy_backend


def _select():
    choice = os.environ.get("LEVYFLOW_BACKEND", "auto").lower()
    if choice == "python":
        return numpy_backend
    try:
        from . import _core
    except ImportError:
        if choice == "cython":
            raise
        return numpy_backend
    return _core


_impl = _select()

BACKEND_NAME = _impl.BACKEND_NAME
interp_cubic_clamped_2d = _impl.interp_cubic_clamped_2d
interp_cubic_clamped_3d = _impl.interp_cubic_clamped_3d
interp_linear_2d = _impl.interp_linear_2d
interp_linear_3d = _impl.interp_linear_3d
trig_velocity_eval = _impl.trig_velocity_eval


def get_backend(name):
    """Return a specific backend module ("numpy" or "cython")."""
    if name == "numpy":
        return numpy_backend
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
