# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; semantics mirror spectra._pykernels exactly."""
import numpy as np
from libc.math cimport INFINITY


def maxplus_step(const double[::1] V, const double[::1] G, shape):
    """Max-plus convolution of two lattice tables of equal ``shape``.

    ``out[s] = max_{q <= s} V[s - q] + G[q]`` componentwise on the lattice;
    ``arg[s]`` is the lowest flat ``q`` attaining it (-1 if unreachable).
    """
    cdef Py_ssize_t K = len(shape)
    cdef Py_ssize_t N = V.shape[0]
    cdef Py_ssize_t s, q, k
    cdef double best, val
    cdef Py_ssize_t bq
    cdef long[::1] dims = np.asarray(shape, dtype=np.int_)
    cdef long[::1] stride = np.empty(K, dtype=np.int_)
    cdef long[::1] ds = np.zeros(K, dtype=np.int_)
    cdef long[::1] qd = np.zeros(K, dtype=np.int_)
    out_np = np.empty(N, dtype=np.float64)
    arg_np = np.empty(N, dtype=np.int64)
    cdef double[::1] out = out_np
    cdef long long[::1] arg = arg_np
    stride[K - 1] = 1
    for k in range(K - 2, -1, -1):
        stride[k] = stride[k + 1] * dims[k + 1]
    for s in range(N):
        best = -INFINITY
        bq = -1
        for k in range(K):
            qd[k] = 0
        q = 0
        # odometer over q <= ds in lexicographic (= ascending flat) order
        while True:
            if G[q] != -INFINITY:
                val = V[s - q] + G[q]
                if val > best:
                    best = val
                    bq = q
            k = K - 1
            qd[k] += 1
            q += stride[k]
            while qd[k] > ds[k]:
                q -= qd[k] * stride[k]
                qd[k] = 0
                k -= 1
                if k < 0:
                    break
                qd[k] += 1
                q += stride[k]
            if k < 0:
                break
        out[s] = best
        arg[s] = bq
        # advance the digits of s
        k = K - 1
        ds[k] += 1
        while k > 0 and ds[k] == dims[k]:
            ds[k] = 0
            k -= 1
            ds[k] += 1
    return out_np, arg_np

