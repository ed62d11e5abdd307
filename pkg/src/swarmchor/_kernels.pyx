# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the planner's hot kernels.

Semantics must match swarmchor._kernels_py exactly; a test compares both
backends on random inputs.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def collision_projection(p, neighbors, inv_axes, double gamma, double radius_base=1.0):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p_ = np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] nb = np.ascontiguousarray(neighbors, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ia = np.ascontiguousarray(inv_axes, dtype=np.float64)
    cdef Py_ssize_t M = nb.shape[0]
    cdef Py_ssize_t K1 = nb.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] targets = np.empty((M, K1, 3))
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] active = np.zeros((M, K1), dtype=np.uint8)
    cdef Py_ssize_t j, k, a
    cdef double w0, w1, w2, norm, radius, h_prev, scale
    cdef double ia0 = ia[0], ia1 = ia[1], ia2 = ia[2]
    for j in range(M):
        h_prev = 0.0
        for k in range(K1):
            w0 = (p_[k, 0] - nb[j, k, 0]) * ia0
            w1 = (p_[k, 1] - nb[j, k, 1]) * ia1
            w2 = (p_[k, 2] - nb[j, k, 2]) * ia2
            norm = sqrt(w0 * w0 + w1 * w1 + w2 * w2)
            radius = radius_base
            if gamma < 1.0 and k > 0 and h_prev > 0.0:
                radius = sqrt(radius_base * radius_base + (1.0 - gamma) * h_prev)
            if norm < radius:
                active[j, k] = 1
                if norm > 0.0:
                    scale = radius / norm
                    targets[j, k, 0] = nb[j, k, 0] + scale * w0 / ia0
                    targets[j, k, 1] = nb[j, k, 1] + scale * w1 / ia1
                    targets[j, k, 2] = nb[j, k, 2] + scale * w2 / ia2
                else:
                    targets[j, k, 0] = nb[j, k, 0] + radius / ia0
                    targets[j, k, 1] = nb[j, k, 1]
                    targets[j, k, 2] = nb[j, k, 2]
            else:
                targets[j, k, 0] = nb[j, k, 0] + w0 / ia0
                targets[j, k, 1] = nb[j, k, 1] + w1 / ia1
                targets[j, k, 2] = nb[j, k, 2] + w2 / ia2
            h_prev = norm * norm - 1.0
    return targets, active.view(bool)


def min_pair_clearance(positions, inv_axes):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] pos = np.ascontiguousarray(positions, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ia = np.ascontiguousarray(inv_axes, dtype=np.float64)
    cdef Py_ssize_t N = pos.shape[0]
    cdef Py_ssize_t K1 = pos.shape[1]
    if N < 2:
        return float("inf")
    cdef double best = np.inf
    cdef double ia0 = ia[0], ia1 = ia[1], ia2 = ia[2]
    cdef Py_ssize_t i, j, k
    cdef double w0, w1, w2, h
    for i in range(N - 1):
        for j in range(i + 1, N):
            for k in range(K1):
                w0 = (pos[j, k, 0] - pos[i, k, 0]) * ia0
                w1 = (pos[j, k, 1] - pos[i, k, 1]) * ia1
                w2 = (pos[j, k, 2] - pos[i, k, 2]) * ia2
                h = w0 * w0 + w1 * w1 + w2 * w2 - 1.0
                if h < best:
                    best = h
    return best


def pair_clearance_series(positions, inv_axes):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] pos = np.ascontiguousarray(positions, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ia = np.ascontiguousarray(inv_axes, dtype=np.float64)
    cdef Py_ssize_t N = pos.shape[0]
    cdef Py_ssize_t K1 = pos.shape[1]
    cdef Py_ssize_t n_pairs = N * (N - 1) // 2
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n_pairs, K1))
    cdef double ia0 = ia[0], ia1 = ia[1], ia2 = ia[2]
    cdef Py_ssize_t i, j, k, row = 0
    cdef double w0, w1, w2
    for i in range(N - 1):
        for j in range(i + 1, N):
            for k in range(K1):
                w0 = (pos[j, k, 0] - pos[i, k, 0]) * ia0
                w1 = (pos[j, k, 1] - pos[i, k, 1]) * ia1
                w2 = (pos[j, k, 2] - pos[i, k, 2]) * ia2
                out[row, k] = w0 * w0 + w1 * w1 + w2 * w2 - 1.0
            row += 1
    return out
