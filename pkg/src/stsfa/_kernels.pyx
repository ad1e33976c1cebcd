# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-unit likelihood and posterior-moment loops.

Mirrors ``_kernels_py`` exactly; units are reduced in index order.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, M_PI
from scipy.special.cython_special cimport log_ndtr

cnp.import_array()

cdef double LN2 = 0.6931471805599453


def panel_loglik(const double[:, ::1] y, const double[:, :, ::1] X, const double[::1] beta,
                 const double[::1] decay, const double[::1] delta,
                 double sigma2_v, double sigma2_u, int s):
    cdef Py_ssize_t n = y.shape[0], t_len = y.shape[1], p = X.shape[2]
    cdef Py_ssize_t i, t, j
    cdef double e, a, ee, bb = 0.0, d2, den, z, total = 0.0, acc
    cdef double sv = sqrt(sigma2_v)
    for t in range(t_len):
        bb += decay[t] * decay[t]
    with nogil:
        for i in range(n):
            a = 0.0
            ee = 0.0
            for t in range(t_len):
                acc = 0.0
                for j in range(p):
                    acc += X[i, t, j] * beta[j]
                e = y[i, t] - acc
                a += decay[t] * e
                ee += e * e
            d2 = sigma2_u / (delta[i] * delta[i])
            den = sigma2_v + bb * d2
            if d2 > 0.0:
                z = -s * a * sqrt(d2) / (sqrt(den) * sv)
            else:
                z = 0.0
            total += -0.5 * log(den) + log_ndtr(z) - 0.5 * ee / sigma2_v + 0.5 * z * z
    return (n * LN2 - 0.5 * n * t_len * log(2.0 * M_PI)
            - 0.5 * n * (t_len - 1) * log(sigma2_v) + total)


def posterior_moments(const double[:, ::1] eps, const double[::1] decay, const double[::1] delta,
                      double sigma2_v, double sigma2_u, int s):
    cdef Py_ssize_t n = eps.shape[0], t_len = eps.shape[1], i, t
    cdef double a, bb = 0.0, d2, den
    out_mu = np.empty(n)
    out_s2 = np.empty(n)
    cdef double[::1] mu = out_mu
    cdef double[::1] s2 = out_s2
    for t in range(t_len):
        bb += decay[t] * decay[t]
    with nogil:
        for i in range(n):
            a = 0.0
            for t in range(t_len):
                a += decay[t] * eps[i, t]
            d2 = sigma2_u / (delta[i] * delta[i])
            den = sigma2_v + bb * d2
            mu[i] = -s * a * d2 / den
            s2[i] = d2 * sigma2_v / den
    return out_mu, out_s2
