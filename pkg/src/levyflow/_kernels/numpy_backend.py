"""Pure-NumPy implementations of the hot kernels.

Same signatures as the compiled core in ``_core.pyx``; used as the fallback
when the extension is unavailable or when ``LEVYFLOW_BACKEND=python``.

All interpolation routines work in fractional index coordinates (units of
grid spacing) and return one value per query point.  The cubic variants
clamp the result to the min/max of the surrounding linear-stencil cell, so
they never create new extrema.
"""

import numpy as np

BACKEND_NAME = "numpy"


def _catmull_rom_weights(t):
    # offsets [-1, 0, 1, 2]; exact (0,1,0,0) at t == 0
    w0 = t * (-0.5 + t * (1.0 - 0.5 * t))
    w1 = 1.0 + t * t * (-2.5 + 1.5 * t)
    w2 = t * (0.5 + t * (2.0 - 1.5 * t))
    w3 = t * t * (-0.5 + 0.5 * t)
    return w0, w1, w2, w3


def _split_index(p, n, periodic):
    if periodic:
        p = np.mod(p, n)
        i0 = np.floor(p).astype(np.intp)
        t = p - i0
        i0 = np.mod(i0, n)
    else:
        p = np.clip(p, 0.0, n - 1.0)
        i0 = np.floor(p).astype(np.intp)
        i0 = np.minimum(i0, n - 2)
        t = p - i0
    return i0, t


def _stencil(i0, n, periodic):
    offs = np.array([-1, 0, 1, 2], dtype=np.intp)
    idx = i0[:, None] + offs[None, :]
    if periodic:
        return np.mod(idx, n)
    return np.clip(idx, 0, n - 1)


def interp_cubic_clamped_2d(field, px, py, periodic):
    """Clamped Catmull-Rom interpolation of a 2D field at points (px, py)."""
    n0, n1 = field.shape
    i0, tx = _split_index(np.asarray(px, dtype=np.float64), n0, periodic)
    j0, ty = _split_index(np.asarray(py, dtype=np.float64), n1, periodic)
    ix = _stencil(i0, n0, periodic)
    jy = _stencil(j0, n1, periodic)
    patch = field[ix[:, :, None], jy[:, None, :]]  # (m, 4, 4)
    wx = np.stack(_catmull_rom_weights(tx), axis=1)
    wy = np.stack(_catmull_rom_weights(ty), axis=1)
    val = np.einsum("mij,mi,mj->m", patch, wx, wy)
    inner = patch[:, 1:3, 1:3].reshape(len(val), 4)
    return np.clip(val, inner.min(axis=1), inner.max(axis=1))


def interp_cubic_clamped_3d(field, px, py, pz, periodic):
    """3D analogue of :func:`interp_cubic_clamped_2d`."""
    n0, n1, n2 = field.shape
    i0, tx = _split_index(np.asarray(px, dtype=np.float64), n0, periodic)
    j0, ty = _split_index(np.asarray(py, dtype=np.float64), n1, periodic)
    k0, tz = _split_index(np.asarray(pz, dtype=np.float64), n2, periodic)
    ix = _stencil(i0, n0, periodic)
    jy = _stencil(j0, n1, periodic)
    kz = _stencil(k0, n2, periodic)
    patch = field[
        ix[:, :, None, None], jy[:, None, :, None], kz[:, None, None, :]
    ]  # (m, 4, 4, 4)
    wx = np.stack(_catmull_rom_weights(tx), axis=1)
    wy = np.stack(_catmull_rom_weights(ty), axis=1)
    wz = np.stack(_catmull_rom_weights(tz), axis=1)
    val = np.einsum("mijk,mi,mj,mk->m", patch, wx, wy, wz)
    inner = patch[:, 1:3, 1:3, 1:3].reshape(len(val), 8)
    return np.clip(val, inner.min(axis=1), inner.max(axis=1))


def interp_linear_2d(field, px, py, periodic):
    """Bilinear interpolation (used for box-domain velocity lookups)."""
    n0, n1 = field.shape
    i0, tx = _split_index(np.asarray(px, dtype=np.float64), n0, periodic)
    j0, ty = _split_index(np.asarray(py, dtype=np.float64), n1, periodic)
    i1 = np.mod(i0 + 1, n0) if periodic else np.minimum(i0 + 1, n0 - 1)
    j1 = np.mod(j0 + 1, n1) if periodic else np.minimum(j0 + 1, n1 - 1)
    return (
        field[i0, j0] * (1 - tx) * (1 - ty)
        + field[i1, j0] * tx * (1 - ty)
        + field[i0, j1] * (1 - tx) * ty
        + field[i1, j1] * tx * ty
    )


def interp_linear_3d(field, px, py, pz, periodic):
    """Trilinear interpolation."""
    n0, n1, n2 = field.shape
    i0, tx = _split_index(np.asarray(px, dtype=np.float64), n0, periodic)
    j0, ty = _split_index(np.asarray(py, dtype=np.float64), n1, periodic)
    k0, tz = _split_index(np.asarray(pz, dtype=np.float64), n2, periodic)
    if periodic:
        i1, j1, k1 = np.mod(i0 + 1, n0), np.mod(j0 + 1, n1), np.mod(k0 + 1, n2)
    else:
        i1 = np.minimum(i0 + 1, n0 - 1)
        j1 = np.minimum(j0 + 1, n1 - 1)
        k1 = np.minimum(k0 + 1, n2 - 1)
    out = np.zeros(len(tx))
    for di, wi in ((i0, 1 - tx), (i1, tx)):
        for dj, wj in ((j0, 1 - ty), (j1, ty)):
            for dk, wk in ((k0, 1 - tz), (k1, tz)):
                out += field[di, dj, dk] * wi * wj * wk
    return out


def trig_velocity_eval(points, wavevecs, polarizations, is_sin, coeffs):
    """Evaluate a divergence-free trigonometric velocity field at points.

    points        -- (m, d) physical coordinates on the unit torus
    wavevecs      -- (n, d) angular wave vectors (2*pi*k)
    polarizations -- (n, d) unit polarization vectors scaled by sqrt(2)
    is_sin        -- (n,) 1 for sine modes, 0 for cosine modes
    coeffs        -- (n,) mode coefficients

    Returns (m, d) velocity samples.
    """
    phase = points @ wavevecs.T  # (m, n)
    trig = np.where(is_sin[None, :].astype(bool), np.sin(phase), np.cos(phase))
    return (trig * coeffs[None, :]) @ polarizations
