"""Pure-numpy implementation of the keyed hash kernels.

Bit-identical to the compiled extension: both fold through wrapping uint64
arithmetic.  numpy array ops wrap silently mod 2**64, which is exactly the
semantics we need; scalars are pre-reduced with Python big ints so no scalar
uint64 overflow path is ever hit.
"""

import numpy as np

_U64 = np.uint64
_WRAP = (1 << 64) - 1

BACKEND_NAME = "numpy"


def _fold(h: np.ndarray, p4: int, mix1: int, mix2: int, shift: int, mask: int) -> np.ndarray:
    h = h * _U64(p4)
    t = h * _U64(mix1)
    t ^= t >> _U64(shift)
    t = t * _U64(mix2)
    t ^= t >> _U64(shift)
    return t & _U64(mask)


def hash_candidates(tokens, base, p2, p4, mix1, mix2, shift, mask):
    """Hash many candidate tokens against one fixed window/key term.

    ``base`` is sum(w_i*q_i) + p3*s reduced mod 2**64 by the caller.
    Returns uint64 values in [0, mask].
    """
    h = np.asarray(tokens, dtype=_U64) * _U64(p2) + _U64(base)
    return _fold(h, p4, mix1, mix2, shift, mask)


def hash_positions(tokens, windows, key_term, window_primes, p2, p4, mix1, mix2, shift, mask):
    """Hash one (token, window) pair per row.

    ``windows`` has shape (n, k); ``key_term`` is p3*s mod 2**64.
    """
    w = np.asarray(windows, dtype=_U64)
    qs = np.asarray(window_primes, dtype=_U64)
    h = np.asarray(tokens, dtype=_U64) * _U64(p2)
    h = h + (w * qs[None, :]).sum(axis=1, dtype=_U64)
    h = h + _U64(key_term)
    return _fold(h, p4, mix1, mix2, shift, mask)
