# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled segment kernels backing neighbour aggregation and row gathers."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()


def scatter_add_rows(values, index, Py_ssize_t num_rows):
    cdef double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef long long[::1] idx = np.ascontiguousarray(index, dtype=np.int64)
    out_arr = np.zeros((num_rows, v.shape[1]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t n = v.shape[0], d = v.shape[1], i, j, r
    if idx.shape[0] != n:
        raise ValueError("index length does not match value rows")
    with nogil:
        for i in range(n):
            r = idx[i]
            for j in range(d):
                out[r, j] += v[i, j]
    return out_arr


def segment_softmax(scores, segment, Py_ssize_t num_segments):
    cdef double[::1] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef long long[::1] seg = np.ascontiguousarray(segment, dtype=np.int64)
    cdef Py_ssize_t n = s.shape[0], i
    seg_max_arr = np.full(num_segments, -np.inf)
    seg_sum_arr = np.zeros(num_segments)
    out_arr = np.empty(n)
    cdef double[::1] seg_max = seg_max_arr
    cdef double[::1] seg_sum = seg_sum_arr
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            if s[i] > seg_max[seg[i]]:
                seg_max[seg[i]] = s[i]
        for i in range(n):
            out[i] = exp(s[i] - seg_max[seg[i]])
            seg_sum[seg[i]] += out[i]
        for i in range(n):
            out[i] = out[i] / seg_sum[seg[i]]
    return out_arr


def segment_softmax_backward(probs, grad, segment, Py_ssize_t num_segments):
    cdef double[::1] p = np.ascontiguousarray(probs, dtype=np.float64)
    cdef double[::1] g = np.ascontiguousarray(grad, dtype=np.float64)
    cdef long long[::1] seg = np.ascontiguousarray(segment, dtype=np.int64)
    cdef Py_ssize_t n = p.shape[0], i
    dot_arr = np.zeros(num_segments)
    out_arr = np.empty(n)
    cdef double[::1] dot = dot_arr
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            dot[seg[i]] += p[i] * g[i]
        for i in range(n):
            out[i] = p[i] * (g[i] - dot[seg[i]])
    return out_arr
