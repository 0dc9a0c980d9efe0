# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: tapered Biot-Savart direct sum and limited bicubic sampling."""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, floor, sqrt, M_PI

cnp.import_array()


cdef inline double _smoothstep(double t) nogil:
    cdef double a, b
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    a = exp(-1.0 / t)
    b = exp(-1.0 / (1.0 - t))
    return a / (a + b)


def direct_velocity(double[:, ::1] tx, double[:, ::1] sx, double[::1] swo,
                    double delta, double width):
    cdef Py_ssize_t m = tx.shape[0], n = sx.shape[0]
    out = np.zeros((m, 3))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double x0, x1, x2, d0, d1, d2, c2, c, eta, f, a0, a1, a2
    cdef double scale = 1.0 / (2.0 * M_PI)
    cdef double lo2 = delta * delta
    for i in prange(m, nogil=True, schedule='static'):
        x0 = tx[i, 0]
        x1 = tx[i, 1]
        x2 = tx[i, 2]
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        for j in range(n):
            d0 = sx[j, 0] - x0
            d1 = sx[j, 1] - x1
            d2 = sx[j, 2] - x2
            c2 = d0 * d0 + d1 * d1 + d2 * d2
            if c2 <= lo2:
                continue
            c = sqrt(c2)
            eta = _smoothstep((c - delta) / width)
            f = eta * swo[j] / c2
            # x ^ y = x ^ (y - x)
            a0 = a0 + f * (x1 * d2 - x2 * d1)
            a1 = a1 + f * (x2 * d0 - x0 * d2)
            a2 = a2 + f * (x0 * d1 - x1 * d0)
        o[i, 0] = a0 * scale
        o[i, 1] = a1 * scale
        o[i, 2] = a2 * scale
    return out


cdef inline double _cr(double t, int k) nogil:
    # Catmull-Rom weights for offsets -1, 0, 1, 2
    if k == 0:
        return ((-0.5 * t + 1.0) * t - 0.5) * t
    if k == 1:
        return (1.5 * t - 2.5) * t * t + 1.0
    if k == 2:
        return ((-1.5 * t + 2.0) * t + 0.5) * t
    return (0.5 * t - 0.5) * t * t


def sample_padded(double[:, ::1] P, double[::1] u, double[::1] v, int cubic, int clip):
    """Interpolate padded array P at fractional (column u, row v) indices."""
    cdef Py_ssize_t m = u.shape[0]
    out = np.empty(m)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef int iu, iv, a, b
    cdef double tu, tv, s, wrow, lo, hi, p00, p01, p10, p11
    for i in prange(m, nogil=True, schedule='static'):
        iu = <int>floor(u[i])
        iv = <int>floor(v[i])
        tu = u[i] - iu
        tv = v[i] - iv
        p00 = P[iv, iu]
        p01 = P[iv, iu + 1]
        p10 = P[iv + 1, iu]
        p11 = P[iv + 1, iu + 1]
        if cubic:
            s = 0.0
            for b in range(4):
                wrow = 0.0
                for a in range(4):
                    wrow = wrow + _cr(tu, a) * P[iv - 1 + b, iu - 1 + a]
                s = s + _cr(tv, b) * wrow
            if clip:
                lo = p00
                hi = p00
                if p01 < lo:
                    lo = p01
                if p01 > hi:
                    hi = p01
                if p10 < lo:
                    lo = p10
                if p10 > hi:
                    hi = p10
                if p11 < lo:
                    lo = p11
                if p11 > hi:
                    hi = p11
                if s < lo:
                    s = lo
                if s > hi:
                    s = hi
        else:
            s = (1 - tv) * ((1 - tu) * p00 + tu * p01) + tv * ((1 - tu) * p10 + tu * p11)
        o[i] = s
    return out
