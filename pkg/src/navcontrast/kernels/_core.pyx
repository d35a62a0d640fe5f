# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: typed-loop twins of navcontrast.kernels._purepy."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p, fmax, fmin

cnp.import_array()

BACKEND_NAME = "compiled"


cdef double _softplus(double z) nogil:
    if z > 30.0:
        return z + log1p(exp(-z))
    return log1p(exp(z))


def circle_terms(sp, sn, double m, double gamma):
    sp = np.ascontiguousarray(sp, dtype=np.float64)
    sn = np.ascontiguousarray(sn, dtype=np.float64)
    cdef double[:] vp = sp
    cdef double[:] vn = sn
    cdef Py_ssize_t h = vp.shape[0], j = vn.shape[0], i
    dsp = np.zeros(h, dtype=np.float64)
    dsn = np.zeros(j, dtype=np.float64)
    if h == 0 or j == 0:
        return 0.0, dsp, dsn

    cdef double o_n = -m, d_n = m, o_p = 1.0 + m, d_p = 1.0 - m
    ln = np.empty(j, dtype=np.float64)
    lp = np.empty(h, dtype=np.float64)
    an = np.empty(j, dtype=np.float64)
    ap = np.empty(h, dtype=np.float64)
    cdef double[:] vln = ln, vlp = lp, van = an, vap = ap
    cdef double[:] vdsp = dsp, vdsn = dsn
    cdef double mx_n = -1e300, mx_p = -1e300
    cdef double a, s

    for i in range(j):
        s = vn[i]
        a = fmax(s - o_n, 0.0)
        van[i] = a
        vln[i] = gamma * a * (s - d_n)
        mx_n = fmax(mx_n, vln[i])
    for i in range(h):
        s = vp[i]
        a = fmax(o_p - s, 0.0)
        vap[i] = a
        vlp[i] = -gamma * a * (s - d_p)
        mx_p = fmax(mx_p, vlp[i])

    cdef double sum_n = 0.0, sum_p = 0.0
    for i in range(j):
        sum_n += exp(vln[i] - mx_n)
    for i in range(h):
        sum_p += exp(vlp[i] - mx_p)
    cdef double z = mx_n + log(sum_n) + mx_p + log(sum_p)
    cdef double loss = _softplus(z)
    cdef double sig
    if z > -30.0:
        sig = 1.0 / (1.0 + exp(-z))
    else:
        sig = exp(z)

    for i in range(j):
        s = vn[i]
        a = van[i] + (s - d_n if s > o_n else 0.0)
        vdsn[i] = sig * exp(vln[i] - mx_n) / sum_n * gamma * a
    for i in range(h):
        s = vp[i]
        a = (s - d_p if s < o_p else 0.0) - vap[i]
        vdsp[i] = sig * exp(vlp[i] - mx_p) / sum_p * gamma * a
    return loss, dsp, dsn


def infonce_terms(sp, sn, double tau):
    sp = np.ascontiguousarray(sp, dtype=np.float64)
    sn = np.ascontiguousarray(sn, dtype=np.float64)
    cdef double[:] vp = sp
    cdef double[:] vn = sn
    cdef Py_ssize_t h = vp.shape[0], j = vn.shape[0], i, k
    if h == 0 or j == 0:
        raise ValueError("infonce_terms requires at least one positive and one negative")
    dsp = np.zeros(h, dtype=np.float64)
    dsn = np.zeros(j, dtype=np.float64)
    cdef double[:] vdsp = dsp, vdsn = dsn
    en = np.empty(j, dtype=np.float64)
    cdef double[:] ven = en

    cdef double mx = -1e300
    for i in range(h):
        mx = fmax(mx, vp[i] / tau)
    for i in range(j):
        mx = fmax(mx, vn[i] / tau)

    cdef double s = 0.0
    for i in range(j):
        ven[i] = exp(vn[i] / tau - mx)
        s += ven[i]

    cdef double loss = 0.0, ep, denom, inv_sum = 0.0
    for i in range(h):
        ep = exp(vp[i] / tau - mx)
        denom = ep + s
        loss += log(denom) + mx - vp[i] / tau
        vdsp[i] = (-s / denom) / (h * tau)
        inv_sum += 1.0 / denom
    for i in range(j):
        vdsn[i] = ven[i] * inv_sum / (h * tau)
    return loss / h, dsp, dsn


def mine_pair_masks(sp, sn, double m):
    sp = np.ascontiguousarray(sp, dtype=np.float64)
    sn = np.ascontiguousarray(sn, dtype=np.float64)
    cdef double[:] vp = sp
    cdef double[:] vn = sn
    cdef Py_ssize_t h = vp.shape[0], j = vn.shape[0], i
    if h == 0:
        raise ValueError("mine_pair_masks requires at least one positive")
    keep_p = np.zeros(h, dtype=np.uint8)
    keep_n = np.zeros(j, dtype=np.uint8)
    false_neg = np.zeros(j, dtype=np.uint8)
    cdef cnp.uint8_t[:] vkp = keep_p, vkn = keep_n, vfn = false_neg

    cdef double lower = 1e300
    for i in range(h):
        lower = fmin(lower, vp[i])
    lower -= m

    cdef double hi = 1.0 - m
    cdef double thr = -1e300
    cdef bint any_kept = False
    for i in range(j):
        if vn[i] >= hi:
            vfn[i] = 1
        elif vn[i] > lower:
            vkn[i] = 1
            any_kept = True
            thr = fmax(thr, vn[i])
    if any_kept:
        thr += m
        for i in range(h):
            if vp[i] < thr:
                vkp[i] = 1
    return keep_p.view(bool), keep_n.view(bool), false_neg.view(bool)


def dtw_cost(cost):
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    cdef double[:, :] c = cost
    cdef Py_ssize_t n = c.shape[0], m = c.shape[1], i, j
    if n == 0 or m == 0:
        raise ValueError("dtw_cost requires non-empty sequences")
    acc = np.empty((n, m), dtype=np.float64)
    cdef double[:, :] a = acc
    a[0, 0] = c[0, 0]
    for j in range(1, m):
        a[0, j] = a[0, j - 1] + c[0, j]
    for i in range(1, n):
        a[i, 0] = a[i - 1, 0] + c[i, 0]
        for j in range(1, m):
            a[i, j] = c[i, j] + fmin(a[i - 1, j], fmin(a[i, j - 1], a[i - 1, j - 1]))
    return a[n - 1, m - 1]
