# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``.

Same loop order and the same floating point operations as the numpy
fallback.  Linear-domain results are bitwise identical for p in
{0.5, 1, 2}; for other p the elementwise power comes from different libm
routines and may differ in the last bits.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow, log2, exp2, sqrt, INFINITY

cnp.import_array()


cdef inline double _logadd2(double a, double b) nogil:
    cdef double m, d
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        m = a
        d = b - a
    else:
        m = b
        d = a - b
    return m + log2(1.0 + exp2(d))


cdef inline double _power(double x, double p) nogil:
    # numpy's fast paths for array ** scalar, so both backends round alike
    if p == 2.0:
        return x * x
    if p == 1.0:
        return x
    if p == 0.5:
        return sqrt(x)
    return pow(x, p)


cdef void _push_linear(double[::1] a, Py_ssize_t n, double[::1] best, double[::1] best3) nogil:
    cdef Py_ssize_t k
    cdef double s, v
    for k in range(n):
        if a[k] > best[k]:
            best[k] = a[k]
    if n == 1:
        if a[0] > best3[0]:
            best3[0] = a[0]
        return
    if n == 2:
        s = a[0] + a[1]
        if s > best3[0]:
            best3[0] = s
        if s > best3[1]:
            best3[1] = s
        return
    for k in range(n):
        v = (a[k] + a[(k + n - 1) % n]) + a[(k + 1) % n]
        if v > best3[k]:
            best3[k] = v


cdef void _push_log(double[::1] a, Py_ssize_t n, double[::1] best, double[::1] best3) nogil:
    cdef Py_ssize_t k
    cdef double s, v
    for k in range(n):
        if a[k] > best[k]:
            best[k] = a[k]
    if n == 1:
        if a[0] > best3[0]:
            best3[0] = a[0]
        return
    if n == 2:
        s = _logadd2(a[0], a[1])
        if s > best3[0]:
            best3[0] = s
        if s > best3[1]:
            best3[1] = s
        return
    for k in range(n):
        v = _logadd2(_logadd2(a[k], a[(k + n - 1) % n]), a[(k + 1) % n])
        if v > best3[k]:
            best3[k] = v


def leader_powers(levels, double p):
    cdef Py_ssize_t J = len(levels) - 1
    cdef Py_ssize_t js, j, k, n
    cdef const double[::1] src
    cdef double[::1] a, best, best3
    restricted = [np.zeros(1 << j) for j in range(J + 1)]
    neigh = [np.zeros(1 << j) for j in range(J + 1)]
    work = np.empty(1 << J)
    a = work
    for js in range(J, -1, -1):
        src = np.ascontiguousarray(levels[js], dtype=np.float64)
        n = 1 << js
        for k in range(n):
            a[k] = _power(src[k], p)
        for j in range(js, -1, -1):
            best = restricted[j]
            best3 = neigh[j]
            _push_linear(a, n, best, best3)
            if j:
                n >>= 1
                for k in range(n):
                    a[k] = (a[2 * k] + a[2 * k + 1]) * 0.5
    return restricted, neigh


def leader_log_powers(levels, double p):
    cdef Py_ssize_t J = len(levels) - 1
    cdef Py_ssize_t js, j, k, n
    cdef const double[::1] src
    cdef double[::1] a, best, best3
    restricted = [np.full(1 << j, -np.inf) for j in range(J + 1)]
    neigh = [np.full(1 << j, -np.inf) for j in range(J + 1)]
    work = np.empty(1 << J)
    a = work
    for js in range(J, -1, -1):
        src = np.ascontiguousarray(levels[js], dtype=np.float64)
        n = 1 << js
        for k in range(n):
            a[k] = p * log2(src[k]) if src[k] > 0 else -INFINITY
        for j in range(js, -1, -1):
            best = restricted[j]
            best3 = neigh[j]
            _push_log(a, n, best, best3)
            if j:
                n >>= 1
                for k in range(n):
                    a[k] = _logadd2(a[2 * k], a[2 * k + 1]) - 1.0
    return restricted, neigh


def sup_leaders(levels):
    cdef Py_ssize_t J = len(levels) - 1
    cdef Py_ssize_t j, k, n
    cdef const double[::1] src, below
    cdef double[::1] cur, out
    cdef double v
    sub = [None] * (J + 1)
    sub[J] = np.array(levels[J], dtype=np.float64)
    for j in range(J - 1, -1, -1):
        src = np.ascontiguousarray(levels[j], dtype=np.float64)
        below = sub[j + 1]
        arr = np.empty(1 << j)
        cur = arr
        for k in range(1 << j):
            v = below[2 * k] if below[2 * k] > below[2 * k + 1] else below[2 * k + 1]
            cur[k] = src[k] if src[k] > v else v
        sub[j] = arr
    neigh = []
    for j in range(J + 1):
        cur = sub[j]
        n = 1 << j
        arr = np.empty(n)
        out = arr
        if n <= 2:
            v = cur[0]
            for k in range(n):
                if cur[k] > v:
                    v = cur[k]
            for k in range(n):
                out[k] = v
        else:
            for k in range(n):
                v = cur[k]
                if cur[(k + n - 1) % n] > v:
                    v = cur[(k + n - 1) % n]
                if cur[(k + 1) % n] > v:
                    v = cur[(k + 1) % n]
                out[k] = v
        neigh.append(arr)
    return sub, neigh
