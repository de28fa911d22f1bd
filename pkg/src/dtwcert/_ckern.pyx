# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: banded DTW, Keogh envelopes, envelope exceedance.

Row-wise DP with two rolling rows for DTW, monotone index deques for the
envelopes. Arithmetic mirrors _pykern exactly (ascending channel reduction,
left-to-right path accumulation).
"""

from libc.math cimport INFINITY, fabs, sqrt

import numpy as np

__all__ = ["band_dtw", "envelope", "lb_keogh"]


def band_dtw(const double[:, ::1] a, const double[:, ::1] b, int w, int p_code):
    cdef Py_ssize_t T = a.shape[0]
    cdef Py_ssize_t C = a.shape[1]
    cdef double[::1] prev = np.full(T, np.inf)
    cdef double[::1] cur = np.full(T, np.inf)
    cdef double[::1] tmp
    cdef Py_ssize_t i, j, k, jlo, jhi
    cdef double c, d, best, acc

    for i in range(T):
        jlo = i - w if i - w > 0 else 0
        jhi = i + w if i + w < T - 1 else T - 1
        for j in range(T):
            cur[j] = INFINITY
        for j in range(jlo, jhi + 1):
            if p_code == 0:
                c = 0.0
                for k in range(C):
                    d = fabs(a[i, k] - b[j, k])
                    if d > c:
                        c = d
            elif p_code == 1:
                c = 0.0
                for k in range(C):
                    c = c + fabs(a[i, k] - b[j, k])
            else:
                c = 0.0
                for k in range(C):
                    d = a[i, k] - b[j, k]
                    c = c + d * d
            if i == 0 and j == 0:
                acc = c
            else:
                best = prev[j]
                if j > 0:
                    if prev[j - 1] < best:
                        best = prev[j - 1]
                    if cur[j - 1] < best:
                        best = cur[j - 1]
                if p_code == 0:
                    acc = c if c > best else best
                else:
                    acc = c + best
            cur[j] = acc
        tmp = prev
        prev = cur
        cur = tmp
    if p_code == 2:
        return sqrt(prev[T - 1])
    return prev[T - 1]


def envelope(const double[:, ::1] x, int w):
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t C = x.shape[1]
    upper_arr = np.empty((T, C))
    lower_arr = np.empty((T, C))
    cdef double[:, ::1] upper = upper_arr
    cdef double[:, ::1] lower = lower_arr
    cdef Py_ssize_t[::1] dq = np.empty(T, dtype=np.intp)
    cdef Py_ssize_t k, i, head, tail, right, lo, hi

    for k in range(C):
        head = 0
        tail = 0
        right = 0
        for i in range(T):
            hi = i + w if i + w < T - 1 else T - 1
            while right <= hi:
                while tail > head and x[dq[tail - 1], k] <= x[right, k]:
                    tail -= 1
                dq[tail] = right
                tail += 1
                right += 1
            lo = i - w if i - w > 0 else 0
            while dq[head] < lo:
                head += 1
            upper[i, k] = x[dq[head], k]
        head = 0
        tail = 0
        right = 0
        for i in range(T):
            hi = i + w if i + w < T - 1 else T - 1
            while right <= hi:
                while tail > head and x[dq[tail - 1], k] >= x[right, k]:
                    tail -= 1
                dq[tail] = right
                tail += 1
                right += 1
            lo = i - w if i - w > 0 else 0
            while dq[head] < lo:
                head += 1
            lower[i, k] = x[dq[head], k]
    return upper_arr, lower_arr


def lb_keogh(const double[:, ::1] upper, const double[:, ::1] lower, const double[:, ::1] b, int p_code):
    cdef Py_ssize_t T = b.shape[0]
    cdef Py_ssize_t C = b.shape[1]
    cdef Py_ssize_t i, k
    cdef double total = 0.0
    cdef double e

    for i in range(T):
        for k in range(C):
            if b[i, k] > upper[i, k]:
                e = b[i, k] - upper[i, k]
            elif b[i, k] < lower[i, k]:
                e = lower[i, k] - b[i, k]
            else:
                continue
            if p_code == 0:
                if e > total:
                    total = e
            elif p_code == 1:
                total = total + e
            else:
                total = total + e * e
    if p_code == 2:
        return sqrt(total)
    return total
