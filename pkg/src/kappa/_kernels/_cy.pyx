# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-token kernels. Semantics mirror kappa._kernels._py."""

import numpy as np

from libc.math cimport exp, log, INFINITY
from libc.stdlib cimport free, malloc, qsort


ctypedef struct IdxProb:
    double p
    Py_ssize_t idx


cdef int _cmp_desc(const void* a, const void* b) noexcept nogil:
    # Descending probability; ties go to the lower token id.
    cdef const IdxProb* x = <const IdxProb*> a
    cdef const IdxProb* y = <const IdxProb*> b
    if x.p > y.p:
        return -1
    if x.p < y.p:
        return 1
    if x.idx < y.idx:
        return -1
    if x.idx > y.idx:
        return 1
    return 0


def softmax_temp(const double[::1] logits, double temperature):
    cdef Py_ssize_t n = logits.shape[0]
    cdef Py_ssize_t i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double m = -INFINITY
    cdef double s = 0.0
    cdef double z
    for i in range(n):
        z = logits[i] / temperature
        o[i] = z
        if z > m:
            m = z
    for i in range(n):
        z = exp(o[i] - m)
        o[i] = z
        s += z
    for i in range(n):
        o[i] /= s
    return out


def kl_div(const double[::1] p, const double[::1] q):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        if p[i] > 0.0:
            s += p[i] * log(p[i] / q[i])
    return s


def entropy(const double[::1] p, double eps=1e-12):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s -= p[i] * log(p[i] + eps)
    return s


def max_prob(const double[::1] p):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i
    cdef double m = p[0]
    for i in range(1, n):
        if p[i] > m:
            m = p[i]
    return m


def filter_top_k_top_p(const double[::1] p, Py_ssize_t k, double top_p):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i, m
    if k > n:
        k = n
    cdef IdxProb* pairs = <IdxProb*> malloc(n * sizeof(IdxProb))
    if pairs == NULL:
        raise MemoryError()
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double cum = 0.0
    cdef double kept = 0.0
    try:
        for i in range(n):
            pairs[i].p = p[i]
            pairs[i].idx = i
        qsort(pairs, n, sizeof(IdxProb), _cmp_desc)
        m = k
        for i in range(k):
            cum += pairs[i].p
            if cum >= top_p:
                m = i + 1
                break
        for i in range(m):
            o[pairs[i].idx] = pairs[i].p
            kept += pairs[i].p
        for i in range(m):
            o[pairs[i].idx] /= kept
    finally:
        free(pairs)
    return out


def sample_index(const double[::1] p, double u):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i
    cdef Py_ssize_t idx = n - 1
    cdef double total = 0.0
    cdef double acc = 0.0
    cdef double target
    for i in range(n):
        total += p[i]
    target = u * total
    for i in range(n):
        acc += p[i]
        if acc > target:
            idx = i
            break
    while idx > 0 and p[idx] == 0.0:
        idx -= 1
    return idx
