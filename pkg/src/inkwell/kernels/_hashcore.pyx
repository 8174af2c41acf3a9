# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled keyed-hash kernels.

Must stay bit-identical to numpy_backend; tests compare both backends on
random inputs.  All arithmetic is wrapping uint64 (C unsigned semantics).
"""

import numpy as np

cimport cython
from libc.stdint cimport uint64_t

BACKEND_NAME = "cython"


cdef inline uint64_t _fold(uint64_t h, uint64_t p4, uint64_t mix1,
                           uint64_t mix2, uint64_t shift, uint64_t mask) nogil:
    cdef uint64_t t
    h = h * p4
    t = h * mix1
    t ^= t >> shift
    t = t * mix2
    t ^= t >> shift
    return t & mask


def hash_candidates(tokens, object base, object p2, object p4,
                    object mix1, object mix2, object shift, object mask):
    cdef uint64_t[::1] toks = np.ascontiguousarray(tokens, dtype=np.uint64)
    cdef Py_ssize_t n = toks.shape[0]
    out_arr = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] out = out_arr
    cdef uint64_t c_base = base, c_p2 = p2, c_p4 = p4
    cdef uint64_t c_m1 = mix1, c_m2 = mix2, c_sh = shift, c_mask = mask
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = _fold(toks[i] * c_p2 + c_base, c_p4, c_m1, c_m2, c_sh, c_mask)
    return out_arr


def hash_positions(tokens, windows, object key_term, window_primes, object p2,
                   object p4, object mix1, object mix2, object shift, object mask):
    cdef uint64_t[::1] toks = np.ascontiguousarray(tokens, dtype=np.uint64)
    cdef uint64_t[:, ::1] wins = np.ascontiguousarray(windows, dtype=np.uint64)
    cdef uint64_t[::1] qs = np.ascontiguousarray(window_primes, dtype=np.uint64)
    cdef Py_ssize_t n = toks.shape[0]
    cdef Py_ssize_t k = wins.shape[1]
    out_arr = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] out = out_arr
    cdef uint64_t c_key = key_term, c_p2 = p2, c_p4 = p4
    cdef uint64_t c_m1 = mix1, c_m2 = mix2, c_sh = shift, c_mask = mask
    cdef uint64_t h
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            h = toks[i] * c_p2 + c_key
            for j in range(k):
                h = h + wins[i, j] * qs[j]
            out[i] = _fold(h, c_p4, c_m1, c_m2, c_sh, c_mask)
    return out_arr
