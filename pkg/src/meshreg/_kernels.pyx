# cython: language_level=3
"""Compiled inner loops: exact squared Euclidean distance transform and
bilinear resampling. ``meshreg._kernels_py`` mirrors every function here."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

cdef double INF = 1e20


cdef void _envelope_1d(double* f, Py_ssize_t n, double* d, Py_ssize_t* v,
                       double* z) noexcept nogil:
    # Lower envelope of the parabolas (q - i)^2 + f[i], written to d.
    cdef Py_ssize_t k = 0, q
    cdef double s, fq
    v[0] = 0
    z[0] = -INF
    z[1] = INF
    for q in range(1, n):
        fq = f[q]
        s = ((fq + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((fq + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INF
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]]


def edt_squared(const unsigned char[:, ::1] mask):
    """Squared distance of every pixel to the nearest nonzero pixel of ``mask``."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef Py_ssize_t i, j, n = max(h, w)
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] buf = np.empty(n, dtype=np.float64)
    cdef double[::1] res = np.empty(n, dtype=np.float64)
    cdef double[::1] z = np.empty(n + 1, dtype=np.float64)
    cdef Py_ssize_t[::1] v = np.empty(n, dtype=np.intp)

    with nogil:
        for i in range(h):
            for j in range(w):
                out[i, j] = 0.0 if mask[i, j] else INF
        # columns
        for j in range(w):
            for i in range(h):
                buf[i] = out[i, j]
            _envelope_1d(&buf[0], h, &res[0], &v[0], &z[0])
            for i in range(h):
                out[i, j] = res[i]
        # rows
        for i in range(h):
            _envelope_1d(&out[i, 0], w, &res[0], &v[0], &z[0])
            for j in range(w):
                out[i, j] = res[j]
    return out_arr


def bilinear_sample(const double[:, ::1] img, const double[:, ::1] xs,
                    const double[:, ::1] ys):
    """Sample ``img`` at (xs, ys) (column, row); taps outside the image read 0."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t oh = xs.shape[0], ow = xs.shape[1]
    cdef Py_ssize_t i, j, x0, y0
    cdef double x, y, fx, fy, v00, v01, v10, v11
    out_arr = np.empty((oh, ow), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(oh):
            for j in range(ow):
                x = xs[i, j]
                y = ys[i, j]
                x0 = <Py_ssize_t>floor(x)
                y0 = <Py_ssize_t>floor(y)
                fx = x - x0
                fy = y - y0
                v00 = img[y0, x0] if 0 <= y0 < h and 0 <= x0 < w else 0.0
                v01 = img[y0, x0 + 1] if 0 <= y0 < h and 0 <= x0 + 1 < w else 0.0
                v10 = img[y0 + 1, x0] if 0 <= y0 + 1 < h and 0 <= x0 < w else 0.0
                v11 = img[y0 + 1, x0 + 1] if 0 <= y0 + 1 < h and 0 <= x0 + 1 < w else 0.0
                if fx == 0.0 and fy == 0.0:
                    out[i, j] = v00
                else:
                    out[i, j] = ((1.0 - fy) * ((1.0 - fx) * v00 + fx * v01)
                                 + fy * ((1.0 - fx) * v10 + fx * v11))
    return out_arr
