# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, fabs, INFINITY

cnp.import_array()


def transition_matrix(double x0, double dx, targets, weights):
    cdef const double[:, ::1] tg = np.ascontiguousarray(targets, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t nx = tg.shape[0], nq = tg.shape[1]
    T_arr = np.zeros((nx, nx))
    out_arr = np.zeros(nx)
    cdef double[:, ::1] T = T_arr
    cdef double[::1] outside = out_arr
    cdef Py_ssize_t i, j, k
    cdef double pos, frac
    for i in range(nx):
        for j in range(nq):
            pos = (tg[i, j] - x0) / dx
            if pos < 0.0 or pos > nx - 1:
                outside[i] += w[j]
            k = <Py_ssize_t>floor(pos)
            if k < 0:
                k = 0
            elif k > nx - 2:
                k = nx - 2
            frac = pos - k
            T[i, k] += w[j] * (1.0 - frac)
            T[i, k + 1] += w[j] * frac
    return T_arr, out_arr


def bellman(gain, cont, lo, hi, double unit, bint bang, realized=None):
    cdef const double[::1] g = np.ascontiguousarray(gain, dtype=np.float64)
    cdef const double[:, ::1] C = np.ascontiguousarray(cont, dtype=np.float64)
    cdef const double[:, ::1] R = C if realized is None else np.ascontiguousarray(realized, dtype=np.float64)
    cdef const long long[::1] a = np.ascontiguousarray(lo, dtype=np.int64)
    cdef const long long[::1] b = np.ascontiguousarray(hi, dtype=np.int64)
    cdef Py_ssize_t n = C.shape[0], U = C.shape[1]
    value_arr = np.full((n, U), -np.inf)
    choice_arr = np.full((n, U), -1, dtype=np.int64)
    cdef double[:, ::1] value = value_arr
    cdef long long[:, ::1] choice = choice_arr
    cdef Py_ssize_t i, u
    cdef long long c, cbest, step
    cdef double obj, best
    for i in range(n):
        for u in range(U):
            if a[u] > b[u]:
                continue
            step = 1
            if bang and b[u] > a[u]:
                step = b[u] - a[u]
            best = -INFINITY
            cbest = a[u]
            c = a[u]
            while c <= b[u]:
                obj = c * unit * g[i] + C[i, u + c]
                if obj > best:
                    best = obj
                    cbest = c
                c += step
            choice[i, u] = cbest
            value[i, u] = cbest * unit * g[i] + R[i, u + cbest]
    return value_arr, choice_arr


def choose_controls(gain, local, lo, hi, double unit, bint bang):
    cdef const double[::1] g = np.ascontiguousarray(gain, dtype=np.float64)
    cdef const double[:, ::1] C = np.ascontiguousarray(local, dtype=np.float64)
    cdef const long long[::1] a = np.ascontiguousarray(lo, dtype=np.int64)
    cdef const long long[::1] b = np.ascontiguousarray(hi, dtype=np.int64)
    cdef Py_ssize_t n = g.shape[0], i
    out_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef long long c, cbest, step
    cdef double obj, best
    for i in range(n):
        step = 1
        if bang and b[i] > a[i]:
            step = b[i] - a[i]
        best = -INFINITY
        cbest = a[i]
        c = a[i]
        while c <= b[i]:
            obj = c * unit * g[i] + C[i, c]
            if obj > best:
                best = obj
                cbest = c
            c += step
        out[i] = cbest
    return out_arr


def euler_affine_paths(x0, kappa, double zeta, sig_a, sig_b, z, double h, double s_h):
    cdef const double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    cdef const double[::1] kv = np.ascontiguousarray(kappa, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(sig_a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(sig_b, dtype=np.float64)
    cdef const double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t P = zv.shape[0], L = zv.shape[1], p, ell
    out_arr = np.empty((P, L + 1))
    cdef double[:, ::1] out = out_arr
    cdef double sq = sqrt(h), x, zl
    for p in range(P):
        x = x0v[p]
        out[p, 0] = x
        for ell in range(L):
            zl = zv[p, ell]
            if not (fabs(zl) <= s_h):
                zl = 0.0
            x = x + h * kv[ell] * (x - zeta) + sq * (av[ell] * x + bv[ell]) * zl
            out[p, ell + 1] = x
    return out_arr
