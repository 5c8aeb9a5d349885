# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot loops: distances, logistic terms, loss.

Mirrors geodispatch._kernels.pure exactly; the loss reduction here is a
plain sequential sum, which is deterministic for a given batch.
"""

from libc.math cimport sin, cos, sqrt, atan2, exp, log1p, fabs, M_PI

import numpy as np

cdef double DEG2RAD = M_PI / 180.0


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _softplus(double x) nogil:
    # log(1 + e^x) without overflow
    if x > 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


def haversine_km(lat1, lon1, lat2, lon2, double radius):
    """Element-wise great-circle distance between coordinate arrays, in km."""
    cdef double[::1] a1 = np.ascontiguousarray(lat1, dtype=np.float64)
    cdef double[::1] o1 = np.ascontiguousarray(lon1, dtype=np.float64)
    cdef double[::1] a2 = np.ascontiguousarray(lat2, dtype=np.float64)
    cdef double[::1] o2 = np.ascontiguousarray(lon2, dtype=np.float64)
    cdef Py_ssize_t n = a1.shape[0]
    if o1.shape[0] != n or a2.shape[0] != n or o2.shape[0] != n:
        raise ValueError("coordinate arrays must share one length")
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double phi1, phi2, sp, sl, h
    with nogil:
        for i in range(n):
            phi1 = a1[i] * DEG2RAD
            phi2 = a2[i] * DEG2RAD
            sp = sin((a2[i] - a1[i]) * DEG2RAD * 0.5)
            sl = sin((o2[i] - o1[i]) * DEG2RAD * 0.5)
            h = sp * sp + cos(phi1) * cos(phi2) * (sl * sl)
            if h < 0.0:
                h = 0.0
            elif h > 1.0:
                h = 1.0
            out[i] = radius * (2.0 * atan2(sqrt(h), sqrt(1.0 - h)))
    return out_arr


def sigmoid(x):
    """Numerically stable logistic function, element-wise."""
    cdef double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = _sigmoid(xs[i])
    return out_arr


def bce_loss(scores, q):
    """Mean soft-label binary cross-entropy of logits `scores` against `q`."""
    cdef double[::1] r = np.ascontiguousarray(scores, dtype=np.float64)
    cdef double[::1] qs = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0]
    if qs.shape[0] != n:
        raise ValueError("scores and labels must share one length")
    cdef double acc = 0.0
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            acc += qs[i] * _softplus(-r[i]) + (1.0 - qs[i]) * _softplus(r[i])
    return acc / n


def bce_grad(scores, q):
    """Per-instance derivative of the cross-entropy wrt each logit: sigmoid(r) - q."""
    cdef double[::1] r = np.ascontiguousarray(scores, dtype=np.float64)
    cdef double[::1] qs = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0]
    if qs.shape[0] != n:
        raise ValueError("scores and labels must share one length")
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = _sigmoid(r[i]) - qs[i]
    return out_arr
