# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: inverse Mills ratio, probit derivatives, sign-weighted
column sums and the Householder QR of the masked step-2 design."""

import numpy as np
from libc.math cimport copysign, erfc, exp, fabs, log, sqrt

cdef double SQRT1_2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327
cdef double TAIL_SWITCH = -10.0
cdef int CF_TERMS = 60
cdef double PROB_CLIP = 1e-12


cdef inline double _cdf(double x) nogil:
    return 0.5 * erfc(-x * SQRT1_2)


cdef inline double _imr(double a) nogil:
    cdef double x, t
    cdef int k
    if a > TAIL_SWITCH:
        return INV_SQRT_2PI * exp(-0.5 * a * a) / _cdf(a)
    x = -a
    t = x
    for k in range(CF_TERMS, 0, -1):
        t = x + k / t
    return t


def norm_cdf(x):
    cdef const double[::1] a = np.ascontiguousarray(x, dtype=float).ravel()
    out_arr = np.empty(a.shape[0])
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(a.shape[0]):
            out[i] = _cdf(a[i])
    return out_arr.reshape(np.shape(x))


def inverse_mills(index):
    cdef const double[::1] a = np.ascontiguousarray(index, dtype=float).ravel()
    out_arr = np.empty(a.shape[0])
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(a.shape[0]):
            out[i] = _imr(a[i])
    return out_arr.reshape(np.shape(index))


def probit_derivatives(X, s, gamma):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=float)
    cdef const double[::1] sv = np.ascontiguousarray(s, dtype=float)
    cdef const double[::1] g = np.ascontiguousarray(gamma, dtype=float)
    cdef Py_ssize_t n = x.shape[0], p = x.shape[1], i, j, k
    grad_arr = np.zeros(p)
    hess_arr = np.zeros((p, p))
    cdef double[::1] grad = grad_arr
    cdef double[:, ::1] hess = hess_arr
    cdef double ll = 0.0, a, q, b, lam, w, prob, wx
    with nogil:
        for i in range(n):
            a = 0.0
            for j in range(p):
                a += x[i, j] * g[j]
            q = 2.0 * sv[i] - 1.0
            b = q * a
            lam = _imr(b)
            prob = _cdf(b)
            if prob < PROB_CLIP:
                prob = PROB_CLIP
            elif prob > 1.0 - PROB_CLIP:
                prob = 1.0 - PROB_CLIP
            ll += log(prob)
            w = -lam * (lam + b)
            for j in range(p):
                grad[j] += q * lam * x[i, j]
                wx = w * x[i, j]
                for k in range(j + 1):
                    hess[j, k] += wx * x[i, k]
        for j in range(p):
            for k in range(j):
                hess[k, j] = hess[j, k]
    return ll, grad_arr, hess_arr


def sign_colsum(X, r):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=float)
    cdef const double[::1] rv = np.ascontiguousarray(r, dtype=float)
    cdef Py_ssize_t n = x.shape[0], p = x.shape[1], i, j
    out_arr = np.zeros(p)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            if rv[i] > 0.0:
                for j in range(p):
                    out[j] += x[i, j]
            elif rv[i] < 0.0:
                for j in range(p):
                    out[j] -= x[i, j]
    return out_arr


def masked_qr(X, idx, lam, y):
    """Householder QR of ``[1 | X[:, idx] | lam]`` applied to ``y``.

    The design is assembled column-major inside the kernel, so no
    ``rows x columns`` copy is made in Python. Returns ``(R, Q^T y)`` with
    ``R`` upper triangular; a zero pivot column leaves a zero on the
    diagonal for the caller's condition check. Requires ``rows >= columns``.
    """
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=float)
    cdef const Py_ssize_t[::1] cols = np.ascontiguousarray(idx, dtype=np.intp)
    cdef const double[::1] lv = np.ascontiguousarray(lam, dtype=float)
    cdef Py_ssize_t m = lv.shape[0], J = cols.shape[0], p = J + 2
    cdef Py_ssize_t i, j, k
    if x.shape[0] != m or y.shape[0] != m or m < p:
        raise ValueError("masked_qr needs matching rows and rows >= columns")
    a_arr = np.empty((p, m))
    b_arr = np.array(y, dtype=float, copy=True)
    r_arr = np.zeros((p, p))
    cdef double[:, ::1] a = a_arr
    cdef double[::1] b = b_arr
    cdef double[:, ::1] r = r_arr
    cdef double norm, alpha, vtv, dot, f
    with nogil:
        for i in range(m):
            a[0, i] = 1.0
            a[p - 1, i] = lv[i]
        for j in range(J):
            for i in range(m):
                a[1 + j, i] = x[i, cols[j]]
        for k in range(p):
            norm = 0.0
            for i in range(k, m):
                norm += a[k, i] * a[k, i]
            norm = sqrt(norm)
            if norm == 0.0:
                for j in range(k + 1, p):
                    r[k, j] = a[j, k]
                continue
            alpha = -copysign(norm, a[k, k])
            vtv = 2.0 * norm * (norm + fabs(a[k, k]))
            a[k, k] -= alpha
            for j in range(k + 1, p):
                dot = 0.0
                for i in range(k, m):
                    dot += a[k, i] * a[j, i]
                f = 2.0 * dot / vtv
                for i in range(k, m):
                    a[j, i] -= f * a[k, i]
                r[k, j] = a[j, k]
            dot = 0.0
            for i in range(k, m):
                dot += a[k, i] * b[i]
            f = 2.0 * dot / vtv
            for i in range(k, m):
                b[i] -= f * a[k, i]
            r[k, k] = alpha
    return r_arr, b_arr[:p].copy()
