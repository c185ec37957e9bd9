# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused single-pass loops over float64 buffers.

Mirrors the signatures in ``reference.py``.  Elementwise kernels take flat
views, row-wise kernels take (rows, n) views.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport erf, exp, log, sqrt

cnp.import_array()

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327


def gelu_fwd(const double[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    for i in range(n):
        y[i] = 0.5 * x[i] * (1.0 + erf(x[i] * INV_SQRT2))
    return out


def gelu_bwd(const double[::1] x, const double[::1] g):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] gx = out
    cdef double cdf, pdf
    for i in range(n):
        cdf = 0.5 * (1.0 + erf(x[i] * INV_SQRT2))
        pdf = INV_SQRT_2PI * exp(-0.5 * x[i] * x[i])
        gx[i] = g[i] * (cdf + x[i] * pdf)
    return out


def softmax_fwd(const double[:, ::1] x):
    cdef Py_ssize_t r, j, rows = x.shape[0], n = x.shape[1]
    out = np.empty((rows, n), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef double mx, s
    for r in range(rows):
        mx = x[r, 0]
        for j in range(1, n):
            if x[r, j] > mx:
                mx = x[r, j]
        s = 0.0
        for j in range(n):
            y[r, j] = exp(x[r, j] - mx)
            s += y[r, j]
        s = 1.0 / s
        for j in range(n):
            y[r, j] *= s
    return out


def softmax_bwd(const double[:, ::1] y, const double[:, ::1] g):
    cdef Py_ssize_t r, j, rows = y.shape[0], n = y.shape[1]
    out = np.empty((rows, n), dtype=np.float64)
    cdef double[:, ::1] gx = out
    cdef double dot
    for r in range(rows):
        dot = 0.0
        for j in range(n):
            dot += g[r, j] * y[r, j]
        for j in range(n):
            gx[r, j] = y[r, j] * (g[r, j] - dot)
    return out


def layernorm_fwd(const double[:, ::1] x, const double[::1] gamma,
                  const double[::1] beta, double eps):
    cdef Py_ssize_t r, j, rows = x.shape[0], n = x.shape[1]
    out = np.empty((rows, n), dtype=np.float64)
    mu_arr = np.empty(rows, dtype=np.float64)
    rstd_arr = np.empty(rows, dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef double[::1] mu = mu_arr, rstd = rstd_arr
    cdef double s, var, d, inv_n = 1.0 / n
    for r in range(rows):
        s = 0.0
        for j in range(n):
            s += x[r, j]
        mu[r] = s * inv_n
        var = 0.0
        for j in range(n):
            d = x[r, j] - mu[r]
            var += d * d
        rstd[r] = 1.0 / sqrt(var * inv_n + eps)
        for j in range(n):
            y[r, j] = (x[r, j] - mu[r]) * rstd[r] * gamma[j] + beta[j]
    return out, mu_arr, rstd_arr


def layernorm_bwd(const double[:, ::1] x, const double[::1] mu,
                  const double[::1] rstd, const double[::1] gamma,
                  const double[:, ::1] g):
    cdef Py_ssize_t r, j, rows = x.shape[0], n = x.shape[1]
    gx_arr = np.empty((rows, n), dtype=np.float64)
    dgamma_arr = np.zeros(n, dtype=np.float64)
    dbeta_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[::1] dgamma = dgamma_arr, dbeta = dbeta_arr
    cdef double m1, m2, xhat, gg, inv_n = 1.0 / n
    for r in range(rows):
        m1 = 0.0
        m2 = 0.0
        for j in range(n):
            xhat = (x[r, j] - mu[r]) * rstd[r]
            gg = g[r, j] * gamma[j]
            m1 += gg
            m2 += gg * xhat
            dgamma[j] += g[r, j] * xhat
            dbeta[j] += g[r, j]
        m1 *= inv_n
        m2 *= inv_n
        for j in range(n):
            xhat = (x[r, j] - mu[r]) * rstd[r]
            gg = g[r, j] * gamma[j]
            gx[r, j] = rstd[r] * (gg - m1 - xhat * m2)
    return gx_arr, dgamma_arr, dbeta_arr


def adam_update(double[::1] p, const double[::1] g, double[::1] m,
                double[::1] v, double lr, double beta1, double beta2,
                double eps, long t):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double c1 = 1.0 / (1.0 - beta1**t)
    cdef double c2 = 1.0 / (1.0 - beta2**t)
    cdef double mhat, vhat
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        mhat = m[i] * c1
        vhat = v[i] * c2
        p[i] -= lr * mhat / (sqrt(vhat) + eps)
