# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pointwise kernels: regularized flux and smoothed potential.

Same contracts as the pure-Python reference in `_kernels_py.py`.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, pow, sqrt

BACKEND = "cython"


def flux(a, p, double eps):
    a_arr = np.ascontiguousarray(a, dtype=np.float64)
    p_arr = np.ascontiguousarray(p, dtype=np.float64)
    out = np.zeros_like(a_arr)
    cdef double[:, ::1] av = a_arr
    cdef double[::1] pv = p_arr
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t m = av.shape[0], d = av.shape[1]
    cdef Py_ssize_t i, j
    cdef double s2, s, coef
    for i in range(m):
        s2 = 0.0
        for j in range(d):
            s2 += av[i, j] * av[i, j]
        if s2 == 0.0:
            continue
        s = sqrt(s2)
        coef = pow(s, 2.0 * pv[i] - 2.0) / (eps + pow(s, pv[i]))
        for j in range(d):
            ov[i, j] = av[i, j] * coef
    return out


def potential(a, p, double eps):
    a_arr = np.ascontiguousarray(a, dtype=np.float64)
    p_arr = np.ascontiguousarray(p, dtype=np.float64)
    out = np.empty(a_arr.shape[0], dtype=np.float64)
    cdef double[:, ::1] av = a_arr
    cdef double[::1] pv = p_arr
    cdef double[::1] ov = out
    cdef Py_ssize_t m = av.shape[0], d = av.shape[1]
    cdef Py_ssize_t i, j
    cdef double s2, sp
    for i in range(m):
        s2 = 0.0
        for j in range(d):
            s2 += av[i, j] * av[i, j]
        if s2 == 0.0:
            sp = 0.0
        else:
            sp = pow(sqrt(s2), pv[i])
        ov[i] = sp / pv[i] - (eps / pv[i]) * log(eps + sp)
    return out
