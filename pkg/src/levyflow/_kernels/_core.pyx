# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the NumPy kernels in ``numpy_backend``.

Scalar loops over query points; identical semantics, tighter inner loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, floor, sin

cnp.import_array()

BACKEND_NAME = "cython"


cdef inline void _cr_weights(double t, double* w) nogil:
    w[0] = t * (-0.5 + t * (1.0 - 0.5 * t))
    w[1] = 1.0 + t * t * (-2.5 + 1.5 * t)
    w[2] = t * (0.5 + t * (2.0 - 1.5 * t))
    w[3] = t * t * (-0.5 + 0.5 * t)


cdef inline Py_ssize_t _wrap(Py_ssize_t i, Py_ssize_t n) nogil:
    i = i % n
    if i < 0:
        i += n
    return i


cdef inline Py_ssize_t _clamp_idx(Py_ssize_t i, Py_ssize_t n) nogil:
    if i < 0:
        return 0
    if i > n - 1:
        return n - 1
    return i


cdef inline double _split(double p, Py_ssize_t n, bint periodic,
                          Py_ssize_t* i0) nogil:
    cdef double t
    if periodic:
        p = p - n * floor(p / n)
        i0[0] = <Py_ssize_t>floor(p)
        t = p - i0[0]
        i0[0] = _wrap(i0[0], n)
    else:
        if p < 0.0:
            p = 0.0
        if p > n - 1.0:
            p = n - 1.0
        i0[0] = <Py_ssize_t>floor(p)
        if i0[0] > n - 2:
            i0[0] = n - 2
        t = p - i0[0]
    return t


def interp_cubic_clamped_2d(double[:, ::1] field, double[::1] px,
                            double[::1] py, bint periodic):
    cdef Py_ssize_t n0 = field.shape[0], n1 = field.shape[1]
    cdef Py_ssize_t m = px.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t q, a, b, i0, j0, ia, jb
    cdef double tx, ty, val, lo, hi, v
    cdef double wx[4]
    cdef double wy[4]
    cdef Py_ssize_t ii[4]
    cdef Py_ssize_t jj[4]
    with nogil:
        for q in range(m):
            tx = _split(px[q], n0, periodic, &i0)
            ty = _split(py[q], n1, periodic, &j0)
            _cr_weights(tx, wx)
            _cr_weights(ty, wy)
            for a in range(4):
                if periodic:
                    ii[a] = _wrap(i0 + a - 1, n0)
                    jj[a] = _wrap(j0 + a - 1, n1)
                else:
                    ii[a] = _clamp_idx(i0 + a - 1, n0)
                    jj[a] = _clamp_idx(j0 + a - 1, n1)
            val = 0.0
            for a in range(4):
                for b in range(4):
                    val += wx[a] * wy[b] * field[ii[a], jj[b]]
            lo = field[ii[1], jj[1]]
            hi = lo
            for a in range(1, 3):
                for b in range(1, 3):
                    v = field[ii[a], jj[b]]
                    if v < lo:
                        lo = v
                    if v > hi:
                        hi = v
            if val < lo:
                val = lo
            if val > hi:
                val = hi
            out[q] = val
    return out_arr


def interp_cubic_clamped_3d(double[:, :, ::1] field, double[::1] px,
                            double[::1] py, double[::1] pz, bint periodic):
    cdef Py_ssize_t n0 = field.shape[0], n1 = field.shape[1], n2 = field.shape[2]
    cdef Py_ssize_t m = px.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t q, a, b, c, i0, j0, k0
    cdef double tx, ty, tz, val, lo, hi, v
    cdef double wx[4]
    cdef double wy[4]
    cdef double wz[4]
    cdef Py_ssize_t ii[4]
    cdef Py_ssize_t jj[4]
    cdef Py_ssize_t kk[4]
    with nogil:
        for q in range(m):
            tx = _split(px[q], n0, periodic, &i0)
            ty = _split(py[q], n1, periodic, &j0)
            tz = _split(pz[q], n2, periodic, &k0)
            _cr_weights(tx, wx)
            _cr_weights(ty, wy)
            _cr_weights(tz, wz)
            for a in range(4):
                if periodic:
                    ii[a] = _wrap(i0 + a - 1, n0)
                    jj[a] = _wrap(j0 + a - 1, n1)
                    kk[a] = _wrap(k0 + a - 1, n2)
                else:
                    ii[a] = _clamp_idx(i0 + a - 1, n0)
                    jj[a] = _clamp_idx(j0 + a - 1, n1)
                    kk[a] = _clamp_idx(k0 + a - 1, n2)
            val = 0.0
            for a in range(4):
                for b in range(4):
                    for c in range(4):
                        val += wx[a] * wy[b] * wz[c] * field[ii[a], jj[b], kk[c]]
            lo = field[ii[1], jj[1], kk[1]]
            hi = lo
            for a in range(1, 3):
                for b in range(1, 3):
                    for c in range(1, 3):
                        v = field[ii[a], jj[b], kk[c]]
                        if v < lo:
                            lo = v
                        if v > hi:
                            hi = v
            if val < lo:
                val = lo
            if val > hi:
                val = hi
            out[q] = val
    return out_arr


def interp_linear_2d(double[:, ::1] field, double[::1] px, double[::1] py,
                     bint periodic):
    cdef Py_ssize_t n0 = field.shape[0], n1 = field.shape[1]
    cdef Py_ssize_t m = px.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t q, i0, j0, i1, j1
    cdef double tx, ty
    with nogil:
        for q in range(m):
            tx = _split(px[q], n0, periodic, &i0)
            ty = _split(py[q], n1, periodic, &j0)
            if periodic:
                i1 = _wrap(i0 + 1, n0)
                j1 = _wrap(j0 + 1, n1)
            else:
                i1 = _clamp_idx(i0 + 1, n0)
                j1 = _clamp_idx(j0 + 1, n1)
            out[q] = (field[i0, j0] * (1 - tx) * (1 - ty)
                      + field[i1, j0] * tx * (1 - ty)
                      + field[i0, j1] * (1 - tx) * ty
                      + field[i1, j1] * tx * ty)
    return out_arr


def interp_linear_3d(double[:, :, ::1] field, double[::1] px, double[::1] py,
                     double[::1] pz, bint periodic):
    cdef Py_ssize_t n0 = field.shape[0], n1 = field.shape[1], n2 = field.shape[2]
    cdef Py_ssize_t m = px.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t q, i0, j0, k0, i1, j1, k1
    cdef double tx, ty, tz
    with nogil:
        for q in range(m):
            tx = _split(px[q], n0, periodic, &i0)
            ty = _split(py[q], n1, periodic, &j0)
            tz = _split(pz[q], n2, periodic, &k0)
            if periodic:
                i1 = _wrap(i0 + 1, n0)
                j1 = _wrap(j0 + 1, n1)
                k1 = _wrap(k0 + 1, n2)
            else:
                i1 = _clamp_idx(i0 + 1, n0)
                j1 = _clamp_idx(j0 + 1, n1)
                k1 = _clamp_idx(k0 + 1, n2)
            out[q] = (
                field[i0, j0, k0] * (1 - tx) * (1 - ty) * (1 - tz)
                + field[i1, j0, k0] * tx * (1 - ty) * (1 - tz)
                + field[i0, j1, k0] * (1 - tx) * ty * (1 - tz)
                + field[i1, j1, k0] * tx * ty * (1 - tz)
                + field[i0, j0, k1] * (1 - tx) * (1 - ty) * tz
                + field[i1, j0, k1] * tx * (1 - ty) * tz
                + field[i0, j1, k1] * (1 - tx) * ty * tz
                + field[i1, j1, k1] * tx * ty * tz)
    return out_arr


def trig_velocity_eval(double[:, ::1] points, double[:, ::1] wavevecs,
                       double[:, ::1] polarizations, cnp.uint8_t[::1] is_sin,
                       double[::1] coeffs):
    cdef Py_ssize_t m = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t n = wavevecs.shape[0]
    out_arr = np.zeros((m, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t q, k, c
    cdef double phase, amp
    with nogil:
        for q in range(m):
            for k in range(n):
                phase = 0.0
                for c in range(d):
                    phase += points[q, c] * wavevecs[k, c]
                if is_sin[k]:
                    amp = coeffs[k] * sin(phase)
                else:
                    amp = coeffs[k] * cos(phase)
                for c in range(d):
                    out[q, c] += amp * polarizations[k, c]
    return out_arr
