"""Backend equivalence: the compiled kernels must match the NumPy fallback."""

import numpy as np
import pytest

from levyflow import _kernels
from levyflow._kernels import numpy_backend

HAVE_CYTHON = _kernels.BACKEND_NAME == "cython"
cython_backend = _kernels.get_backend("cython") if HAVE_CYTHON else None

needs_cython = pytest.mark.skipif(not HAVE_CYTHON, reason="compiled core not built")


def _random_points(rng, m, lo, hi):
    return rng.uniform(lo, hi, size=m)


@needs_cython
@pytest.mark.parametrize("periodic", [True, False])
def test_cubic_2d_backends_agree(rng, periodic):
    field = rng.standard_normal((17, 23))
    px = _random_points(rng, 500, -5.0, 25.0)
    py = _random_points(rng, 500, -5.0, 30.0)
    if not periodic:
        px, py = np.clip(px, 0, 16), np.clip(py, 0, 22)
    a = numpy_backend.interp_cubic_clamped_2d(field, px, py, periodic)
    b = cython_backend.interp_cubic_clamped_2d(field, px, py, periodic)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@needs_cython
@pytest.mark.parametrize("periodic", [True, False])
def test_cubic_3d_backends_agree(rng, periodic):
    field = rng.standard_normal((9, 11, 13))
    px = _random_points(rng, 300, 0.0, 8.0)
    py = _random_points(rng, 300, 0.0, 10.0)
    pz = _random_points(rng, 300, 0.0, 12.0)
    a = numpy_backend.interp_cubic_clamped_3d(field, px, py, pz, periodic)
    b = cython_backend.interp_cubic_clamped_3d(field, px, py, pz, periodic)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@needs_cython
@pytest.mark.parametrize("periodic", [True, False])
def test_linear_backends_agree(rng, periodic):
    field = rng.standard_normal((17, 23))
    px = _random_points(rng, 400, 0.0, 16.0)
    py = _random_points(rng, 400, 0.0, 22.0)
    a = numpy_backend.interp_linear_2d(field, px, py, periodic)
    b = cython_backend.interp_linear_2d(field, px, py, periodic)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)
    f3 = rng.standard_normal((7, 9, 11))
    pz = _random_points(rng, 400, 0.0, 6.0)
    px3, py3 = np.clip(px, 0, 6), np.clip(py, 0, 8)
    a3 = numpy_backend.interp_linear_3d(f3, px3, py3, pz, periodic)
    b3 = cython_backend.interp_linear_3d(f3, px3, py3, pz, periodic)
    np.testing.assert_allclose(a3, b3, rtol=0, atol=1e-14)


@needs_cython
def test_trig_eval_backends_agree(rng):
    n, d, m = 12, 2, 200
    wavevecs = 2 * np.pi * rng.integers(-3, 4, size=(n, d)).astype(float)
    pol = rng.standard_normal((n, d))
    is_sin = rng.integers(0, 2, size=n).astype(np.uint8)
    coeffs = rng.standard_normal(n)
    pts = rng.random((m, d))
    a = numpy_backend.trig_velocity_eval(pts, wavevecs, pol, is_sin, coeffs)
    b = cython_backend.trig_velocity_eval(pts, wavevecs, pol, is_sin, coeffs)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_interp_exact_at_nodes(rng):
    field = rng.standard_normal((12, 12))
    ii, jj = np.meshgrid(np.arange(12.0), np.arange(12.0), indexing="ij")
    vals = _kernels.interp_cubic_clamped_2d(field, ii.ravel(), jj.ravel(), True)
    assert np.array_equal(vals, field.ravel())


def test_interp_never_exceeds_local_extrema(rng):
    field = rng.standard_normal((16, 16))
    px = rng.uniform(-20, 40, size=2000)
    py = rng.uniform(-20, 40, size=2000)
    vals = _kernels.interp_cubic_clamped_2d(field, px, py, True)
    assert vals.min() >= field.min() - 1e-15
    assert vals.max() <= field.max() + 1e-15


def test_linear_interp_reproduces_linear_field():
    # non-periodic bilinear is exact on a linear function
    x = np.arange(10.0)
    field = 2.0 * x[:, None] + 3.0 * x[None, :] + 1.0
    rng = np.random.default_rng(5)
    px = rng.uniform(0, 9, size=300)
    py = rng.uniform(0, 9, size=300)
    vals = _kernels.interp_linear_2d(field, px, py, False)
    np.testing.assert_allclose(vals, 2 * px + 3 * py + 1.0, atol=1e-12)
