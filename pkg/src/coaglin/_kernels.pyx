# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled interpolation scatter kernel (same contract as _kernels_py)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport frexp

cnp.import_array()


def accumulate(double[:, ::1] M, rows, z, coef, int Jmin, int Jmax, int P,
               const double[::1] ref_nodes, const double[::1] bary):
    cdef const long long[::1] r = np.ascontiguousarray(rows, dtype=np.int64)
    cdef const double[::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[::1] cc = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t npts = zz.shape[0]
    cdef Py_ssize_t i, k, col0
    cdef int e, hit
    cdef double lo = 2.0 ** Jmin, hi = 2.0 ** Jmax
    cdef double m, t, d, s, c
    cdef double[::1] q = np.empty(P)
    with nogil:
        for i in range(npts):
            c = cc[i]
            if c == 0.0 or zz[i] < lo or zz[i] >= hi:
                continue
            m = frexp(zz[i], &e)
            t = 4.0 * m - 3.0
            col0 = (e - 1 - Jmin) * P
            hit = -1
            s = 0.0
            for k in range(P):
                d = t - ref_nodes[k]
                if d == 0.0:
                    hit = k
                    break
                q[k] = bary[k] / d
                s += q[k]
            if hit >= 0:
                M[r[i], col0 + hit] += c
                continue
            c = c / s
            for k in range(P):
                M[r[i], col0 + k] += c * q[k]
