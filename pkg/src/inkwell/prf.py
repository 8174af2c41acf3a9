"""Keyed pseudorandom function over (candidate token, context window, secret key).

Everything downstream — green/red partitions, Gumbel noise, tournament
g-values, detection scores — is a thin view over the two hash kernels
exposed here.  Scalar entry points mirror the vector ones; the vector forms
are the hot path and dispatch to the selected kernel backend.
"""

from dataclasses import dataclass, field

import numpy as np

from . import constants, kernels
from .errors import InvalidParameterError, InvalidWindowError

_WRAP = (1 << 64) - 1


@dataclass(frozen=True)
class PrfParams:
    """Hash constants; changing any value breaks cross-version detection."""

    window_primes: tuple[int, ...] = constants.WINDOW_PRIMES
    p2: int = constants.P2
    p3: int = constants.P3
    p4: int = constants.P4
    mix_primes: tuple[int, int] = constants.MIX_PRIMES
    shift: int = constants.SHIFT
    modulus: int = constants.MODULUS

    def __post_init__(self):
        primes = (*self.window_primes, self.p2, self.p3, self.p4, *self.mix_primes)
        if len(set(primes)) != len(primes):
            raise InvalidParameterError("hash primes must be pairwise distinct")
        if self.modulus <= (1 << 31) or self.modulus & (self.modulus - 1):
            raise InvalidParameterError("modulus must be a power of two above 2**31")
        if not 0 < self.shift < 64:
            raise InvalidParameterError("shift must be in (0, 64)")


DEFAULT_PARAMS = PrfParams()


@dataclass(frozen=True)
class WatermarkKey:
    """Secret key s plus window size k and the hash constants."""

    s: int
    k: int = 2
    params: PrfParams = field(default=DEFAULT_PARAMS)

    def __post_init__(self):
        if self.k < 1:
            raise InvalidParameterError(
                f"window size must be >= 1, got {self.k} (size 0 degrades to a "
                "fixed partition and breaks the detection null)"
            )
        if self.k > len(self.params.window_primes):
            raise InvalidParameterError(
                f"window size {self.k} exceeds the {len(self.params.window_primes)} "
                "frozen window primes"
            )
        if not 0 <= self.s <= constants.MAX_KEY:
            raise InvalidParameterError("secret key must be in [0, 2**64)")

    @property
    def key_term(self) -> int:
        """p3*s reduced mod 2**64, the precomputed key contribution."""
        return (self.params.p3 * self.s) & _WRAP

    def window_base(self, window) -> int:
        """sum(w_i*q_i) + p3*s mod 2**64 for one concrete window."""
        if len(window) != self.k:
            raise InvalidWindowError(
                f"window has {len(window)} tokens, key expects {self.k}"
            )
        acc = self.key_term
        for w, q in zip(window, self.params.window_primes):
            acc = (acc + int(w) * q) & _WRAP
        return acc


def _check_window(window, key: WatermarkKey) -> None:
    if len(window) != key.k:
        raise InvalidWindowError(
            f"window has {len(window)} tokens, key expects {key.k}"
        )


def hash_tokens(tokens: np.ndarray, window, key: WatermarkKey) -> np.ndarray:
    """Hash an array of candidate tokens against one window. Values in [0, M)."""
    p = key.params
    base = key.window_base(window)
    return kernels.hash_candidates(
        np.asarray(tokens, dtype=np.uint64), base, p.p2, p.p4,
        p.mix_primes[0], p.mix_primes[1], p.shift, p.modulus - 1,
    )


def hash_at_positions(tokens: np.ndarray, windows: np.ndarray, key: WatermarkKey) -> np.ndarray:
    """Hash one (token, window) pair per row; windows has shape (n, k)."""
    windows = np.asarray(windows, dtype=np.uint64)
    if windows.ndim != 2 or windows.shape[1] != key.k:
        raise InvalidWindowError(
            f"windows must have shape (n, {key.k}), got {windows.shape}"
        )
    p = key.params
    return kernels.hash_positions(
        np.asarray(tokens, dtype=np.uint64), windows, key.key_term,
        np.asarray(p.window_primes[: key.k], dtype=np.uint64),
        p.p2, p.p4, p.mix_primes[0], p.mix_primes[1], p.shift, p.modulus - 1,
    )


def hash_raw(token: int, window, key: WatermarkKey) -> int:
    """Deterministic hash of one (token, window, key) triple, in [0, M)."""
    _check_window(window, key)
    return int(hash_tokens(np.array([token], dtype=np.uint64), window, key)[0])


def uniform_tokens(tokens: np.ndarray, window, key: WatermarkKey) -> np.ndarray:
    """PRF values in [0, 1) for an array of candidate tokens."""
    return hash_tokens(tokens, window, key).astype(np.float64) / key.params.modulus


def uniform_at_positions(tokens: np.ndarray, windows: np.ndarray, key: WatermarkKey) -> np.ndarray:
    return hash_at_positions(tokens, windows, key).astype(np.float64) / key.params.modulus


def uniform(token: int, window, key: WatermarkKey) -> float:
    """PRF value in [0, 1): hash_raw / M."""
    return hash_raw(token, window, key) / key.params.modulus


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise InvalidParameterError(f"gamma must be in [0, 1], got {gamma}")


def is_green(token: int, window, key: WatermarkKey, gamma: float) -> bool:
    """True iff the PRF value falls below gamma."""
    _check_gamma(gamma)
    return uniform(token, window, key) < gamma


def green_mask_tokens(tokens: np.ndarray, window, key: WatermarkKey, gamma: float) -> np.ndarray:
    _check_gamma(gamma)
    return uniform_tokens(tokens, window, key) < gamma


def green_mask_at_positions(tokens: np.ndarray, windows: np.ndarray, key: WatermarkKey,
                            gamma: float) -> np.ndarray:
    _check_gamma(gamma)
    return uniform_at_positions(tokens, windows, key) < gamma


def layer_token_shift(layer: int) -> np.uint64:
    """Token-id offset that gives tournament layer ``layer`` its judge stream."""
    return np.uint64(layer * constants.LAYER_STRIDE)


def layer_values_at_positions(tokens: np.ndarray, windows: np.ndarray, key: WatermarkKey,
                              depth: int) -> np.ndarray:
    """Binary g-values for tournament layers 1..depth, shape (n, depth).

    Layer l shifts the token id by l*LAYER_STRIDE before hashing, which
    simulates an independent partition per layer without extra key material.
    """
    if depth < 1:
        raise InvalidParameterError(f"depth must be >= 1, got {depth}")
    tokens = np.asarray(tokens, dtype=np.uint64)
    out = np.empty((tokens.shape[0], depth), dtype=bool)
    for layer in range(1, depth + 1):
        u = uniform_at_positions(tokens + layer_token_shift(layer), windows, key)
        out[:, layer - 1] = u < 0.5
    return out
