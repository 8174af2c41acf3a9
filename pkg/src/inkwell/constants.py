"""Frozen keyed-hash protocol constants, version 1.

These numbers define the watermark wire protocol: a text embedded with one
set of constants is undetectable under another.  Do not edit values in a
released protocol version; add a new version instead and bump
PROTOCOL_VERSION.

Construction (all arithmetic wrapping mod 2**64):

    h' = (P2*x + sum_i w_i*Q[i] + P3*s) * P4
    t  = h' * MIX_PRIMES[0];  t ^= t >> SHIFT
    t  = t  * MIX_PRIMES[1];  t ^= t >> SHIFT
    h  = t mod MODULUS

where x is the candidate token id, w the window of k preceding token ids,
and s the secret key.  Every multiplier is a 64-bit prime obtained as the
next prime after a well-known mixing constant (noted inline), so the set is
reproducible from public values.  Two multiply/xorshift rounds are used: a
single round leaves streams of related keys measurably correlated and gives
poor dispersion of high key bits into the folded 32-bit output.
"""

PROTOCOL_VERSION = 1

# One distinct prime per window position; window size k may not exceed
# len(WINDOW_PRIMES).  Distinctness makes permuted windows hash apart.
WINDOW_PRIMES: tuple[int, ...] = (
    0x9E3779B185EBCA8D,  # nextprime(xxh64 prime 1)
    0xC2B2AE3D27D4EB7B,  # nextprime(xxh64 prime 2)
    0x165667B19E377A01,  # nextprime(xxh64 prime 3)
    0x85EBCA77C2B2AE6B,  # nextprime(xxh64 prime 4)
    0x27D4EB2F165667CB,  # nextprime(xxh64 prime 5)
    0xFF51AFD7ED558CE9,  # nextprime(murmur3 fmix 1)
    0xC4CEB9FE1A85ECCD,  # nextprime(murmur3 fmix 2)
    0x2545F4914F6CDD3B,  # nextprime(xorshift* multiplier)
)

P2 = 0x9E3779B97F4A7C55  # token multiplier, nextprime(2**64/phi)
P3 = 0x5851F42D4C957F65  # key multiplier, nextprime(pcg64 multiplier)
P4 = 0x94D049BB13311243  # outer multiplier, nextprime(splitmix64 mult 2)

MIX_PRIMES: tuple[int, int] = (
    0xBF58476D1CE4E5FF,  # nextprime(splitmix64 mult 1)
    0xD6E8FEB86659FD99,  # nextprime(moremur mult 1)
)

SHIFT = 29
MODULUS = 1 << 32

# Tournament layers shift the candidate token id by layer*LAYER_STRIDE before
# hashing, giving each layer its own judge stream.  A stride of 1 would make
# nearby token ids share hash values across layers (g_l(v) equals
# g_{l+d}(v-d)), which measurably breaks the detection null on small
# vocabularies; the large stride keeps layer streams disjoint for any
# realistic vocabulary.
LAYER_STRIDE = 1 << 20

MAX_WINDOW_SIZE = len(WINDOW_PRIMES)
MAX_KEY = (1 << 64) - 1
