# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled sketch hash kernels.

Must stay bit-identical to sketchql._pykernels: same splitmix64-based
mixing, same accumulation order.  tests/test_kernels.py cross-checks
the two backends on random inputs.
"""

from libc.stdint cimport int64_t, uint64_t

import numpy as np


cdef uint64_t GAMMA = 0x9E3779B97F4A7C15u
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9u
cdef uint64_t MIX2 = 0x94D049BB133111EBu


cdef inline uint64_t mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t row_key(uint64_t s0, Py_ssize_t j) nogil:
    return mix(s0 + (<uint64_t>(j + 1)) * GAMMA)


def row_keys(seed, int depth):
    cdef uint64_t s0 = mix(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF))
    out = np.empty(depth, dtype=np.uint64)
    cdef uint64_t[::1] view = out
    cdef Py_ssize_t j
    for j in range(depth):
        view[j] = row_key(s0, j)
    return out


def hash_columns(ids, seed, int depth, width):
    cdef int64_t[::1] ids_v = np.ascontiguousarray(ids, dtype=np.int64)
    cdef uint64_t s0 = mix(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF))
    cdef uint64_t w = <uint64_t>width
    cdef Py_ssize_t n = ids_v.shape[0]
    out = np.empty((depth, n), dtype=np.int64)
    cdef int64_t[:, ::1] out_v = out
    cdef Py_ssize_t j, t
    cdef uint64_t key, spread
    with nogil:
        for j in range(depth):
            key = row_key(s0, j)
            for t in range(n):
                spread = (<uint64_t>ids_v[t]) * GAMMA
                out_v[j, t] = <int64_t>(mix(key ^ spread) % w)
    return out


def insert(table, ids, weights, seed):
    cdef float[:, ::1] tab = table
    cdef int64_t[::1] ids_v = np.ascontiguousarray(ids, dtype=np.int64)
    cdef float[::1] w_v = np.ascontiguousarray(weights, dtype=np.float32)
    cdef uint64_t s0 = mix(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF))
    cdef uint64_t w = <uint64_t>tab.shape[1]
    cdef Py_ssize_t depth = tab.shape[0]
    cdef Py_ssize_t n = ids_v.shape[0]
    cdef Py_ssize_t j, t
    cdef uint64_t key
    with nogil:
        for j in range(depth):
            key = row_key(s0, j)
            for t in range(n):
                tab[j, mix(key ^ ((<uint64_t>ids_v[t]) * GAMMA)) % w] += w_v[t]


def lookup_min(table, ids, seed):
    # const view: tables are frozen read-only after construction.
    cdef const float[:, ::1] tab = table
    cdef int64_t[::1] ids_v = np.ascontiguousarray(ids, dtype=np.int64)
    cdef uint64_t s0 = mix(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF))
    cdef uint64_t w = <uint64_t>tab.shape[1]
    cdef Py_ssize_t depth = tab.shape[0]
    cdef Py_ssize_t n = ids_v.shape[0]
    out = np.empty(n, dtype=np.float32)
    cdef float[::1] out_v = out
    cdef Py_ssize_t j, t
    cdef uint64_t key, spread
    cdef float v
    with nogil:
        for t in range(n):
            spread = (<uint64_t>ids_v[t]) * GAMMA
            v = tab[0, mix(row_key(s0, 0) ^ spread) % w]
            for j in range(1, depth):
                key = row_key(s0, j)
                if tab[j, mix(key ^ spread) % w] < v:
                    v = tab[j, mix(key ^ spread) % w]
            out_v[t] = v
    return out
