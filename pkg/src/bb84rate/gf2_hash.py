"""Modified Toeplitz hashing over GF(2).

A hash from ``l1`` to ``l2`` bits is the matrix ``(I, T)`` where ``I`` is the
``l2 x l2`` identity and ``T`` is the ``l2 x (l1 - l2)`` Toeplitz block
``T[i, j] = seed[j - i + l2 - 1]``. The ``l1 - 1`` seed bits fill the
diagonals of ``T`` exactly once, so the family is universal2 and every
member is linear and surjective.

Bit vectors are ``uint8`` numpy arrays of zeros and ones. Bit index 0 is the
leftmost bit of every serialisation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "ToeplitzHash",
    "as_bits",
    "random_bits",
    "pack_bits",
    "unpack_bits",
    "bits_to_hex",
    "bits_from_hex",
    "make_hash",
    "apply",
    "matrix",
    "collision_probability_exhaustive",
    "verification_tag",
    "tag_collisions",
]

# Above this many T-block entries apply() switches to FFT correlation.
DIRECT_LIMIT = 1 << 16
EXHAUSTIVE_MAX_L1 = 12


def as_bits(x) -> np.ndarray:
    """Coerce a sequence or a ``'0101'`` string to a 0/1 ``uint8`` array."""
    if isinstance(x, str):
        x = [int(c) for c in x if not c.isspace()]
    arr = np.asarray(x, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise ValueError("bit vectors may only contain 0 and 1")
    return arr


def random_bits(rng: np.random.Generator, length: int) -> np.ndarray:
    return rng.integers(0, 2, size=length, dtype=np.uint8)


def pack_bits(bits) -> bytes:
    """Bit-packed bytes; bit 0 is the most significant bit of byte 0."""
    return np.packbits(as_bits(bits), bitorder="big").tobytes()


def unpack_bits(data: bytes, length: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="big")
    if length > bits.size:
        raise ValueError(f"{len(data)} bytes hold fewer than {length} bits")
    return bits[:length].copy()


def bits_to_hex(bits) -> str:
    return pack_bits(bits).hex()


def bits_from_hex(text: str, length: int) -> np.ndarray:
    return unpack_bits(bytes.fromhex(text), length)


@dataclass(frozen=True, eq=False)
class ToeplitzHash:
    input_len: int
    output_len: int
    seed: np.ndarray

    def __call__(self, x):
        return apply(self, x)

    def __eq__(self, other):
        return (isinstance(other, ToeplitzHash)
                and self.input_len == other.input_len
                and self.output_len == other.output_len
                and np.array_equal(self.seed, other.seed))

    def __hash__(self):
        return hash((self.input_len, self.output_len, self.seed.tobytes()))


def make_hash(l1: int, l2: int, seed) -> ToeplitzHash:
    """Build the modified Toeplitz hash ``F_2^l1 -> F_2^l2`` for ``seed`` (``l1 - 1`` bits)."""
    if l1 < 1 or l2 < 0 or l2 > l1:
        raise ValueError(f"need 0 <= l2 <= l1 and l1 >= 1, got l1={l1}, l2={l2}")
    seed = as_bits(seed)
    if seed.size != l1 - 1:
        raise ValueError(f"seed must have l1 - 1 = {l1 - 1} bits, got {seed.size}")
    seed = seed.copy()
    seed.flags.writeable = False
    return ToeplitzHash(l1, l2, seed)


def matrix(h: ToeplitzHash) -> np.ndarray:
    """Dense ``l2 x l1`` matrix of ``h``; for inspection and small-size checks."""
    l1, l2 = h.input_len, h.output_len
    m = np.zeros((l2, l1), dtype=np.uint8)
    m[:, :l2] = np.eye(l2, dtype=np.uint8)
    i = np.arange(l2)[:, None]
    j = np.arange(l1 - l2)[None, :]
    if l1 > l2:
        m[:, l2:] = h.seed[j - i + l2 - 1]
    return m


def _toeplitz_part_direct(seed, z, l2):
    # Row i of T reads seed[l2-1-i : l2-1-i+k]; pack both sides into ints and popcount.
    k = z.size
    s_int = int.from_bytes(np.packbits(seed[::-1], bitorder="little").tobytes(), "little")
    z_int = int.from_bytes(np.packbits(z[::-1], bitorder="little").tobytes(), "little")
    # Bit b of s_int is seed[len-1-b]; window start w maps to a shift of len - w - k.
    slen = seed.size
    mask = (1 << k) - 1
    out = np.empty(l2, dtype=np.uint8)
    for i in range(l2):
        w = l2 - 1 - i
        out[i] = ((s_int >> (slen - w - k)) & mask & z_int).bit_count() & 1
    return out


def _toeplitz_part_fft(seed, z, l2):
    k = z.size
    # corr[t] = sum_j seed[t + j] z[j] for t = 0..l2-1, via convolution with reversed z.
    conv = fftconvolve(seed.astype(np.float64), z[::-1].astype(np.float64), mode="valid")
    rounded = np.rint(conv)
    if conv.size and np.max(np.abs(conv - rounded)) > 0.25:
        raise ArithmeticError("FFT correlation lost integer exactness")
    corr = rounded.astype(np.int64) & 1
    assert corr.size == l2 and seed.size - k + 1 == l2
    return corr[::-1].astype(np.uint8)


def apply(h: ToeplitzHash, x, method: str = "auto") -> np.ndarray:
    """Hash ``x`` with ``h``: ``x[:l2] XOR T x[l2:]`` over GF(2).

    ``method`` is ``"direct"`` (word-parallel popcount), ``"fft"``
    (correlation by FFT, ``O(l1 log l1)``) or ``"auto"``.
    """
    x = as_bits(x)
    if x.size != h.input_len:
        raise ValueError(f"input has {x.size} bits, hash expects {h.input_len}")
    l1, l2 = h.input_len, h.output_len
    head = x[:l2]
    z = x[l2:]
    if l2 == 0 or z.size == 0 or not z.any():
        return head.copy()
    if method == "auto":
        method = "direct" if l2 * z.size <= DIRECT_LIMIT else "fft"
    if method == "direct":
        t = _toeplitz_part_direct(h.seed, z, l2)
    elif method == "fft":
        t = _toeplitz_part_fft(h.seed, z, l2)
    else:
        raise ValueError(f"unknown method {method!r}")
    return head ^ t


def collision_probability_exhaustive(l1: int, l2: int, x, x_prime) -> Fraction:
    """Exact seed-probability that ``x`` and ``x_prime`` collide, over all ``2^(l1-1)`` seeds.

    Uses the dense matrices of every family member, independently of
    :func:`apply`.
    """
    if l1 > EXHAUSTIVE_MAX_L1:
        raise ValueError(f"exhaustive enumeration limited to l1 <= {EXHAUSTIVE_MAX_L1}")
    x, x_prime = as_bits(x), as_bits(x_prime)
    if x.size != l1 or x_prime.size != l1:
        raise ValueError(f"inputs must both have {l1} bits")
    if np.array_equal(x, x_prime):
        raise ValueError("inputs must differ")
    mats = _all_matrices(l1, l2)
    hx = (mats.astype(np.int64) @ x) & 1
    hxp = (mats.astype(np.int64) @ x_prime) & 1
    hits = int(np.all(hx == hxp, axis=1).sum())
    return Fraction(hits, mats.shape[0])


_MATRIX_CACHE: dict = {}


def _all_matrices(l1, l2):
    key = (l1, l2)
    if key not in _MATRIX_CACHE:
        count = 1 << (l1 - 1)
        seeds = ((np.arange(count)[:, None] >> np.arange(l1 - 2, -1, -1)[None, :]) & 1)
        mats = np.stack([matrix(make_hash(l1, l2, s.astype(np.uint8))) for s in seeds])
        _MATRIX_CACHE[key] = mats
    return _MATRIX_CACHE[key]


def verification_tag(x, m3: int, seed) -> np.ndarray:
    """``m3``-bit tag of ``x`` under the modified Toeplitz hash given by ``seed``."""
    x = as_bits(x)
    if m3 > x.size:
        raise ValueError(f"tag length {m3} exceeds input length {x.size}")
    return apply(make_hash(x.size, m3, seed), x)


def tag_collisions(x, x_prime, m3: int, seeds: np.ndarray) -> np.ndarray:
    """Per-seed booleans: do ``x`` and ``x_prime`` get the same ``m3``-bit tag?

    ``seeds`` is a ``(count, len(x) - 1)`` 0/1 array. By linearity the tags
    agree iff the hash of ``x XOR x_prime`` vanishes, which is evaluated
    for all seeds at once.
    """
    x, x_prime = as_bits(x), as_bits(x_prime)
    if x.size != x_prime.size:
        raise ValueError("inputs must have equal length")
    if m3 > x.size:
        raise ValueError(f"tag length {m3} exceeds input length {x.size}")
    seeds = np.asarray(seeds, dtype=np.uint8)
    if seeds.ndim != 2 or seeds.shape[1] != x.size - 1:
        raise ValueError(f"seeds must have shape (count, {x.size - 1})")
    d = x ^ x_prime
    head = d[:m3].astype(np.int32)
    z = d[m3:].astype(np.int32)
    k = z.size
    collide = np.ones(seeds.shape[0], dtype=bool)
    for i in range(m3):
        w = m3 - 1 - i
        row = seeds[:, w:w + k].astype(np.int32) @ z if k else 0
        collide &= ((row + head[i]) & 1) == 0
    return collide
