"""Pinned 64-bit mixing and exact fixed-point arithmetic.

Everything downstream (oracles, split bits, digests, file checksums) calls the
one mixer defined here, so its constants are part of the serialized format.
See FORMAT.md before touching any constant in this file.

The fixed-point helpers quantize probabilities and per-index bit costs:

* probabilities live on a 2**64 grid (``frac`` = round(p * 2**64), stored as
  ``frac - 1`` so p = 1 fits in a uint64),
* bit costs and the overhead parameter eps live on a 2**32 grid ("units of
  2**-32 bit"), with ``ceil_log2_fp`` computing ceil(log2(num/den) * 2**32)
  exactly in integer arithmetic.
"""

from __future__ import annotations

from fractions import Fraction

MASK64 = (1 << 64) - 1

# splitmix64 finalizer constants plus the golden-gamma increment.
PHI = 0x9E3779B97F4A7C15
MIX_C1 = 0xBF58476D1CE4E5B9
MIX_C2 = 0x94D049BB133111EB

# One fixed-point "bit" for schedules and eps values.
FP_UNIT = 1 << 32
FP_FRAC_BITS = 32


def u64(x: int) -> int:
    return x & MASK64


def fin64(z: int) -> int:
    """One splitmix64 finalizer round (xor-shift, multiply, repeat)."""
    z = u64(z)
    z ^= z >> 30
    z = u64(z * MIX_C1)
    z ^= z >> 27
    z = u64(z * MIX_C2)
    z ^= z >> 31
    return z


def mix64(a: int, b: int, c: int) -> int:
    """Mix three 64-bit words into one; the project's only hash function.

    Three chained finalizer rounds: each input is folded in before a round,
    so every input word passes through at least one full avalanche stage.
    """
    h = fin64(u64(a) + PHI)
    h = fin64(h ^ u64(b))
    return fin64(h ^ u64(c))


def hash_bytes(data: bytes, seed: int) -> int:
    """Chunked mix chain over a byte string (little-endian 8-byte chunks)."""
    h = mix64(seed, len(data), 0)
    for j in range(0, len(data), 8):
        chunk = int.from_bytes(data[j : j + 8], "little")
        h = mix64(h, chunk, (j >> 3) + 1)
    return h


DIGEST_HI_SALT = 0x6A09E667F3BCC909
DIGEST_LO_SALT = 0xBB67AE8584CAA73B


def digest_pair(data: bytes, seed: int) -> tuple[int, int]:
    """128-bit key digest: one chained pass, two salted finalizations."""
    base = hash_bytes(data, seed)
    return fin64(base ^ DIGEST_HI_SALT), fin64(base ^ DIGEST_LO_SALT)


def mulhi64(a: int, b: int) -> int:
    """High 64 bits of the 128-bit product; maps a uniform word into [0, b)."""
    return (u64(a) * u64(b)) >> 64


def seed_limbs(seed: int) -> list[int]:
    """Split an unbounded non-negative seed into 64-bit limbs, low first."""
    if seed < 0:
        raise ValueError("seeds are non-negative")
    if seed == 0:
        return [0]
    limbs = []
    while seed:
        limbs.append(seed & MASK64)
        seed >>= 64
    return limbs


def mix_seed(master: int, i: int, seed: int) -> int:
    """Hash an (index, unbounded seed) pair under a master seed.

    For seeds below 2**64 this is exactly ``mix64(master, i, seed)``, so the
    bounded-seed and unbounded-seed oracle forms agree where they overlap.
    """
    limbs = seed_limbs(seed)
    h = mix64(master, i, limbs[0])
    for j in range(1, len(limbs)):
        h = mix64(h, j, limbs[j])
    return h


# ---------------------------------------------------------------------------
# numpy-vectorized mixer (same function, array-at-a-time)

import numpy as np

_NP_PHI = np.uint64(PHI)
_NP_C1 = np.uint64(MIX_C1)
_NP_C2 = np.uint64(MIX_C2)
_NP_S30 = np.uint64(30)
_NP_S27 = np.uint64(27)
_NP_S31 = np.uint64(31)


def _fin64_np(z):
    z = z ^ (z >> _NP_S30)
    z = z * _NP_C1
    z = z ^ (z >> _NP_S27)
    z = z * _NP_C2
    return z ^ (z >> _NP_S31)


def mix64_np(a, b, c):
    """Vectorized mix64 over uint64 arrays (broadcasting allowed)."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    c = np.asarray(c, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _fin64_np(a + _NP_PHI)
        h = _fin64_np(h ^ b)
        return _fin64_np(h ^ c)


_NP_M32 = np.uint64(0xFFFFFFFF)
_NP_S32 = np.uint64(32)


def mulhi64_np(a, b):
    """Vectorized high 64 bits of the 128-bit product, via 32-bit halves."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    ah, al = a >> _NP_S32, a & _NP_M32
    bh, bl = b >> _NP_S32, b & _NP_M32
    mid = ah * bl + ((al * bl) >> _NP_S32)
    mid2 = al * bh + (mid & _NP_M32)
    return ah * bh + (mid >> _NP_S32) + (mid2 >> _NP_S32)


# ---------------------------------------------------------------------------
# exact fixed-point quantities


def prob_to_frac(p) -> int:
    """Quantize a probability to its 2**64 grid point round(p * 2**64).

    Accepts floats or Fractions. The result is in [1, 2**64]; probabilities
    that round to 0 are rejected rather than silently clamped.
    """
    f = Fraction(p)
    if not 0 < f <= 1:
        raise ValueError(f"probability {p!r} outside (0, 1]")
    frac = round(f * (1 << 64))
    if frac < 1:
        raise ValueError(f"probability {p!r} rounds to zero on the 2**-64 grid")
    return frac


def frac_to_pm1(frac: int) -> int:
    """Stored uint64 form of a probability fraction: frac - 1.

    A trial with probability frac/2**64 succeeds iff mix64(...) <= frac - 1.
    """
    if not 1 <= frac <= 1 << 64:
        raise ValueError("fraction out of range")
    return frac - 1


def frac_to_float(frac: int) -> float:
    return frac / float(1 << 64)


def eps_to_fp(eps) -> int:
    """Quantize eps (bits of overhead per index) to units of 2**-32 bit."""
    f = Fraction(eps)
    if f <= 0:
        raise ValueError("eps must be positive")
    fp = round(f * FP_UNIT)
    if fp < 1:
        raise ValueError("eps rounds to zero on the 2**-32 grid")
    return fp


def ceil_log2_fp(num: int, den: int, frac_bits: int = FP_FRAC_BITS) -> int:
    """Exact ceil(log2(num/den) * 2**frac_bits) for integers num >= den >= 1.

    Uses certified interval arithmetic: the mantissa is squared repeatedly at
    a working precision, keeping floor/ceil bounds; any ambiguous rounding
    decision restarts at a higher precision. Power-of-two ratios are exact,
    and log2 of any other rational is irrational, so the ceiling is always
    eventually determined.
    """
    if num <= 0 or den <= 0:
        raise ValueError("positive integers required")
    if num < den:
        raise ValueError("ratio must be >= 1")
    if num == den:
        return 0

    e = num.bit_length() - den.bit_length()
    if (den << e) > num:
        e -= 1
    dshift = den << e
    if dshift == num:
        return e << frac_bits

    extra = 8
    while True:
        nbits = frac_bits + extra
        prec = 2 * nbits + 32
        one = 1 << prec
        two = 2 << prec
        xlo = (num << prec) // dshift
        xhi = xlo + 1
        frac_accum = 0
        ok = True
        for _ in range(nbits):
            lo2 = (xlo * xlo) >> prec
            hi2 = (xhi * xhi + one - 1) >> prec
            bit_lo = lo2 >= two
            bit_hi = hi2 >= two
            if bit_lo != bit_hi:
                ok = False
                break
            frac_accum <<= 1
            if bit_lo:
                frac_accum |= 1
                xlo = lo2 >> 1
                xhi = (hi2 + 1) >> 1
            else:
                xlo = lo2
                xhi = hi2
        if ok:
            mask = (1 << extra) - 1
            if frac_accum & mask != mask:
                # true fractional value lies strictly inside
                # (frac_accum, frac_accum + 1) / 2**extra and is irrational,
                # so the ceiling at frac_bits is determined.
                return (e << frac_bits) + (frac_accum >> extra) + 1
        extra *= 2


def cost_fp_from_frac(frac: int) -> int:
    """Per-index bit cost ceil(log2(1/p) * 2**32) for p = frac/2**64."""
    if not 1 <= frac <= 1 << 64:
        raise ValueError("fraction out of range")
    return ceil_log2_fp(1 << 64, frac)


def fp_to_float(fp: int) -> float:
    return fp / float(FP_UNIT)
