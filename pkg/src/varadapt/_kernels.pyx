# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled distance and k-medoids kernels; same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


def pairwise_distances(X, Y):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], d = x.shape[1]
    out_arr = np.empty((n, m))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, c
    cdef double acc, t
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for c in range(d):
                t = x[i, c] - y[j, c]
                acc += t * t
            out[i, j] = sqrt(acc)
    return out_arr


def pam_build(D, Py_ssize_t k):
    cdef const double[:, ::1] dist = np.ascontiguousarray(D, dtype=np.float64)
    cdef Py_ssize_t S = dist.shape[0]
    medoids = np.empty(k, dtype=np.int64)
    cdef long long[::1] med = medoids
    nearest_arr = np.empty(S)
    cdef double[::1] nearest = nearest_arr
    chosen_arr = np.zeros(S, dtype=np.uint8)
    cdef unsigned char[::1] chosen = chosen_arr
    cdef Py_ssize_t i, j, r, best
    cdef double acc, best_val, diff

    best, best_val = 0, INFINITY
    for i in range(S):
        acc = 0.0
        for j in range(S):
            acc += dist[i, j]
        if acc < best_val:
            best_val, best = acc, i
    med[0] = best
    chosen[best] = 1
    for j in range(S):
        nearest[j] = dist[best, j]
    for r in range(1, k):
        best, best_val = -1, -1.0
        for i in range(S):
            if chosen[i]:
                continue
            acc = 0.0
            for j in range(S):
                diff = nearest[j] - dist[i, j]
                if diff > 0:
                    acc += diff
            if acc > best_val:
                best_val, best = acc, i
        med[r] = best
        chosen[best] = 1
        for j in range(S):
            if dist[best, j] < nearest[j]:
                nearest[j] = dist[best, j]
    return medoids


cdef void _nearest_two(const double[:, ::1] dist, long long[::1] med,
                       long long[::1] n1, double[::1] d1, double[::1] d2) nogil:
    cdef Py_ssize_t S = dist.shape[0], k = med.shape[0], j, p
    cdef double v
    for j in range(S):
        n1[j] = 0
        d1[j] = INFINITY
        d2[j] = INFINITY
        for p in range(k):
            v = dist[med[p], j]
            if v < d1[j]:
                d2[j] = d1[j]
                d1[j] = v
                n1[j] = p
            elif v < d2[j]:
                d2[j] = v


def pam_swap(D, medoids_in, Py_ssize_t max_iter):
    cdef const double[:, ::1] dist = np.ascontiguousarray(D, dtype=np.float64)
    medoids = np.array(medoids_in, dtype=np.int64)
    cdef long long[::1] med = medoids
    cdef Py_ssize_t S = dist.shape[0], k = med.shape[0]
    n1_arr = np.empty(S, dtype=np.int64)
    d1_arr = np.empty(S)
    d2_arr = np.empty(S)
    is_med_arr = np.zeros(S, dtype=np.uint8)
    cdef long long[::1] n1 = n1_arr
    cdef double[::1] d1 = d1_arr, d2 = d2_arr
    cdef unsigned char[::1] is_med = is_med_arr
    cdef Py_ssize_t it, pos, o, j, best_pos, best_o, pos_o, tie_pos, tie_o
    cdef double cost, delta, best_delta, pos_best, alt, new, tol

    _nearest_two(dist, med, n1, d1, d2)
    cost = 0.0
    for j in range(S):
        cost += d1[j]
    costs = [cost]
    if k == S:
        return medoids, costs
    for it in range(max_iter):
        for j in range(S):
            is_med[j] = 0
        for pos in range(k):
            is_med[med[pos]] = 1
        tol = 1e-12 * (cost if cost > 1.0 else 1.0)
        best_delta, best_pos, best_o = 0.0, -1, -1
        tie_pos, tie_o = -1, -1
        with nogil:
            for pos in range(k):
                pos_best, pos_o = INFINITY, -1
                for o in range(S):
                    if is_med[o]:
                        continue
                    delta = 0.0
                    for j in range(S):
                        alt = d2[j] if n1[j] == pos else d1[j]
                        new = dist[o, j] if dist[o, j] < alt else alt
                        delta += new - d1[j]
                    if delta < pos_best:
                        pos_best, pos_o = delta, o
                    # cost-neutral swap to a lower index (tie-break toward low indices)
                    if delta <= 0.0 and o < med[pos] and (tie_o < 0 or o < tie_o):
                        tie_pos, tie_o = pos, o
                if pos_o >= 0 and pos_best < best_delta - tol:
                    best_delta, best_pos, best_o = pos_best, pos, pos_o
        if best_pos < 0:
            best_pos, best_o = tie_pos, tie_o
        if best_pos < 0:
            break
        med[best_pos] = best_o
        _nearest_two(dist, med, n1, d1, d2)
        cost = 0.0
        for j in range(S):
            cost += d1[j]
        costs.append(cost)
    return medoids, costs


def assign(D, medoids):
    member = np.argmin(np.asarray(D)[medoids], axis=0).astype(np.int64)
    member[medoids] = np.arange(len(medoids))
    return member
