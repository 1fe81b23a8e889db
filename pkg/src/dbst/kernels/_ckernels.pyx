# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the loop-shaped kernels (see ``_fallback.py``)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def kwon_terms(probs):
    cdef double[:, :, ::1] p = np.ascontiguousarray(probs, dtype=np.float64)
    cdef Py_ssize_t T = p.shape[0], n = p.shape[1], K = p.shape[2]
    cdef Py_ssize_t t, i, k
    cdef double[::1] alea = np.zeros(n)
    cdef double[::1] epi = np.zeros(n)
    cdef double[::1] mean = np.empty(K)
    cdef double acc, d, v
    for i in range(n):
        for k in range(K):
            acc = 0.0
            for t in range(T):
                acc += p[t, i, k]
            mean[k] = acc / T
        acc = 0.0
        d = 0.0
        for t in range(T):
            for k in range(K):
                v = p[t, i, k]
                acc += v * (1.0 - v)
                d += (v - mean[k]) * (v - mean[k])
        alea[i] = acc / T
        epi[i] = d / T
    return np.asarray(alea), np.asarray(epi)


def kendall_gal_terms(probs, log_aleatoric):
    cdef double[:, :, ::1] p = np.ascontiguousarray(probs, dtype=np.float64)
    cdef double[:, ::1] s = np.ascontiguousarray(log_aleatoric, dtype=np.float64)
    cdef Py_ssize_t T = p.shape[0], n = p.shape[1], K = p.shape[2]
    cdef Py_ssize_t t, i, k
    cdef double[::1] alea = np.zeros(n)
    cdef double[::1] ent = np.zeros(n)
    cdef double[:, ::1] mean = np.zeros((n, K))
    cdef double acc, m
    # walk the samples in memory order, then reduce
    for t in range(T):
        for i in range(n):
            alea[i] += exp(s[t, i])
            for k in range(K):
                mean[i, k] += p[t, i, k]
    for i in range(n):
        alea[i] /= T
        acc = 0.0
        for k in range(K):
            m = mean[i, k] / T
            if m > 0.0:
                acc -= m * log(m)
        ent[i] = acc
    return np.asarray(alea), np.asarray(ent)


def assign_nearest(X, C):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(C, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], k = c.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, m, best
    cdef cnp.int64_t[::1] labels = np.empty(n, dtype=np.int64)
    cdef double[::1] dist = np.empty(n)
    cdef double acc, diff, bestd
    for i in range(n):
        best = 0
        bestd = 0.0
        for j in range(k):
            acc = 0.0
            for m in range(d):
                diff = x[i, m] - c[j, m]
                acc += diff * diff
            if j == 0 or acc < bestd:
                bestd = acc
                best = j
        labels[i] = best
        dist[i] = bestd
    return np.asarray(labels), np.asarray(dist)


def min_sqdist(X, c, current):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] cc = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[::1] cur = np.array(current, dtype=np.float64, copy=True)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, m
    cdef double acc, diff
    for i in range(n):
        acc = 0.0
        for m in range(d):
            diff = x[i, m] - cc[m]
            acc += diff * diff
        if acc < cur[i]:
            cur[i] = acc
    return np.asarray(cur)


def centroid_sums(X, labels, Py_ssize_t k):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.int64_t[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, m, j
    cdef double[:, ::1] sums = np.zeros((k, d))
    cdef cnp.int64_t[::1] counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        j = lab[i]
        counts[j] += 1
        for m in range(d):
            sums[j, m] += x[i, m]
    return np.asarray(sums), np.asarray(counts)


def confusion_counts(true, pred, Py_ssize_t K):
    cdef cnp.int64_t[::1] t = np.ascontiguousarray(true, dtype=np.int64)
    cdef cnp.int64_t[::1] p = np.ascontiguousarray(pred, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = np.zeros((K, K), dtype=np.int64)
    cdef Py_ssize_t i
    for i in range(t.shape[0]):
        out[t[i], p[i]] += 1
    return np.asarray(out)
