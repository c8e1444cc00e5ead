# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled weighted-likelihood kernels.

Same contracts as ``_ref``; single pass over the data with no temporary
arrays, which matters because MCMC evaluates these millions of times.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, log1p

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


def normal_loglik_grad(double[:, ::1] X, double[::1] y, double[::1] w,
                       double[::1] beta, double sigma):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef cnp.ndarray[double, ndim=1] grad_arr = np.zeros(p + 1)
    cdef double[::1] grad = grad_arr
    cdef double inv_s2 = 1.0 / (sigma * sigma)
    cdef double log_s = log(sigma)
    cdef double ll = 0.0, wsum = 0.0, gs = 0.0
    cdef double mu, r, z2, wr
    cdef Py_ssize_t i, j
    for i in range(n):
        mu = 0.0
        for j in range(p):
            mu += X[i, j] * beta[j]
        r = y[i] - mu
        z2 = r * r * inv_s2
        ll += w[i] * (z2 + LOG_2PI)
        wsum += w[i]
        gs += w[i] * (z2 - 1.0)
        wr = w[i] * r * inv_s2
        for j in range(p):
            grad[j] += X[i, j] * wr
    grad[p] = gs
    return -0.5 * ll - log_s * wsum, grad_arr


def logit_loglik_grad(double[:, ::1] X, double[::1] y, double[::1] w,
                      double[::1] beta):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef cnp.ndarray[double, ndim=1] grad_arr = np.zeros(p)
    cdef double[::1] grad = grad_arr
    cdef double ll = 0.0
    cdef double mu, emu, softplus, prob, wres
    cdef Py_ssize_t i, j
    for i in range(n):
        mu = 0.0
        for j in range(p):
            mu += X[i, j] * beta[j]
        # one exp per row: softplus and expit share exp(-|mu|)
        if mu > 0.0:
            emu = exp(-mu)
            softplus = mu + log1p(emu)
            prob = 1.0 / (1.0 + emu)
        else:
            emu = exp(mu)
            softplus = log1p(emu)
            prob = emu / (1.0 + emu)
        ll += w[i] * (y[i] * mu - softplus)
        wres = w[i] * (y[i] - prob)
        for j in range(p):
            grad[j] += X[i, j] * wres
    return ll, grad_arr
