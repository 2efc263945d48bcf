"""Bit-granular buffers and the integer codings built on them.

Three layers live here:

* BitBuffer: append-only bit string with O(1) fixed-width window reads. The
  logical bit order is most-significant-bit first, so a value written as a
  binary number reads back from its window unchanged and concatenations of
  fragments behave like concatenations of binary strings.
* RiceCode: Golomb-Rice coding of non-negative integers with skip pointers
  every 64 values for random access.
* EliasFano: monotone integer sequences with strict rank and access, used as
  the predecessor structure for k-perfect thresholds.

The Elias-Fano and Rice acceleration tables (select samples, skip pointers)
are derived data: they are rebuilt after deserialization and never written to
disk.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

_WORD_BITS = 64
_FULL = (1 << 64) - 1


class BitBuffer:
    """Append-only bit string backed by 64-bit words, MSB-first.

    Logical bit b lives in word b >> 6 at in-word position 63 - (b & 63),
    i.e. the first bit written is the most significant bit of word 0.
    """

    __slots__ = ("_words", "_len")

    def __init__(self, capacity_bits: int = 256):
        self._words = np.zeros(max(4, (capacity_bits + 63) >> 6), dtype=np.uint64)
        self._len = 0

    def __len__(self) -> int:
        return self._len

    @property
    def bit_length(self) -> int:
        return self._len

    def _ensure(self, bits: int) -> None:
        need = (bits + 63) >> 6
        if need > len(self._words):
            grown = np.zeros(max(need, 2 * len(self._words)), dtype=np.uint64)
            grown[: len(self._words)] = self._words
            self._words = grown

    def write_bits(self, value: int, width: int) -> "BitBuffer":
        """Append ``value`` as ``width`` bits; returns self for chaining."""
        if not 0 <= width <= 64:
            raise ValueError(f"width {width} outside [0, 64]")
        if value < 0 or value >> width:
            raise ValueError(f"value {value} does not fit in {width} bits")
        if width == 0:
            return self
        pos = self._len
        self._ensure(pos + width)
        wi = pos >> 6
        avail = 64 - (pos & 63)
        if width <= avail:
            self._words[wi] = int(self._words[wi]) | (value << (avail - width))
        else:
            rest = width - avail
            self._words[wi] = int(self._words[wi]) | (value >> rest)
            self._words[wi + 1] = (value & ((1 << rest) - 1)) << (64 - rest)
        self._len = pos + width
        return self

    def read_window(self, offset: int, width: int) -> int:
        """Bits [offset, offset+width) as an unsigned integer, MSB first."""
        if not 0 <= width <= 64:
            raise ValueError(f"width {width} outside [0, 64]")
        if offset < 0 or offset + width > self._len:
            raise ValueError(
                f"window [{offset}, {offset + width}) outside buffer of {self._len} bits"
            )
        if width == 0:
            return 0
        wi = offset >> 6
        avail = 64 - (offset & 63)
        w0 = int(self._words[wi])
        if width <= avail:
            return (w0 >> (avail - width)) & ((1 << width) - 1)
        rest = width - avail
        low = int(self._words[wi + 1]) >> (64 - rest)
        return ((w0 & ((1 << avail) - 1)) << rest) | low

    # -- interop -----------------------------------------------------------

    def words(self) -> np.ndarray:
        """Backing words covering the current length (not a copy)."""
        return self._words[: (self._len + 63) >> 6]

    @classmethod
    def from_words(cls, words: np.ndarray, bit_len: int) -> "BitBuffer":
        """Wrap kernel-produced words; unwritten tail bits must be zero."""
        if bit_len < 0 or bit_len > 64 * len(words):
            raise ValueError("bit length outside the provided words")
        buf = cls.__new__(cls)
        buf._words = np.ascontiguousarray(words, dtype=np.uint64)
        buf._len = bit_len
        return buf

    def to_bytes(self) -> bytes:
        """MSB-first byte serialization: first bit = top bit of first byte."""
        nbytes = (self._len + 7) >> 3
        return self.words().astype(">u8").tobytes()[:nbytes]

    @classmethod
    def from_bytes(cls, data: bytes, bit_len: int) -> "BitBuffer":
        if bit_len > 8 * len(data):
            raise ValueError("bit length exceeds provided bytes")
        nwords = (bit_len + 63) >> 6
        padded = data[: (bit_len + 7) >> 3].ljust(nwords * 8, b"\0")
        words = np.frombuffer(padded, dtype=">u8").astype(np.uint64)
        return cls.from_words(words, bit_len)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitBuffer):
            return NotImplemented
        return self._len == other._len and self.to_bytes() == other.to_bytes()


def write_bits(buf: BitBuffer, value: int, width: int) -> BitBuffer:
    return buf.write_bits(value, width)


def read_window(buf: BitBuffer, offset: int, width: int) -> int:
    return buf.read_window(offset, width)


def read_windows(words: np.ndarray, offsets, width: int) -> np.ndarray:
    """Vectorized read_window over a packed word array.

    Returns bits [offsets[t], offsets[t]+width) of the MSB-first stream for
    every t. Windows may start anywhere but must lie inside the words.
    """
    if not 1 <= width <= 64:
        raise ValueError(f"width {width} outside [1, 64]")
    offsets = np.asarray(offsets, dtype=np.int64)
    if len(offsets) == 0:
        return np.empty(0, dtype=np.uint64)
    if offsets.min() < 0 or offsets.max() + width > 64 * len(words):
        raise ValueError("window outside the provided words")
    mask = np.uint64(0xFFFFFFFFFFFFFFFF if width == 64 else (1 << width) - 1)
    wi = offsets >> 6
    avail = 64 - (offsets & 63)
    w0 = words[wi]
    w1 = words[np.minimum(wi + 1, len(words) - 1)]
    with np.errstate(over="ignore"):
        one_word = (w0 >> np.minimum(avail - width, 63).clip(0).astype(np.uint64)) & mask
        rest = np.clip(width - avail, 0, 63).astype(np.uint64)
        low_mask = (np.uint64(1) << np.minimum(avail, 63).astype(np.uint64)) - np.uint64(1)
        two_words = ((w0 & low_mask) << rest) | (w1 >> np.minimum(64 - rest, np.uint64(63)))
    return np.where(avail >= width, one_word, two_words)


# ---------------------------------------------------------------------------
# Golomb-Rice


_RICE_SKIP_EVERY = 64


@dataclass
class RiceCode:
    """Rice-coded non-negative integers: unary quotient, fixed remainder."""

    parameter: int
    payload: BitBuffer
    count: int
    _skips: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self._skips is None:
            self._skips = _rice_rebuild_skips(self)

    @property
    def bit_length(self) -> int:
        return len(self.payload)

    def decode_at(self, i: int) -> int:
        if not 0 <= i < self.count:
            raise IndexError(f"index {i} outside {self.count} values")
        pos = int(self._skips[i >> 6])
        for _ in range(i & (_RICE_SKIP_EVERY - 1)):
            pos = _rice_skip_one(self.payload, pos, self.parameter)
        return _rice_read_one(self.payload, pos, self.parameter)[0]

    def decode_all(self) -> list[int]:
        out = []
        pos = 0
        for _ in range(self.count):
            value, pos = _rice_read_one(self.payload, pos, self.parameter)
            out.append(value)
        return out


def _rice_skip_one(buf: BitBuffer, pos: int, parameter: int) -> int:
    while buf.read_window(pos, 1):
        pos += 1
    return pos + 1 + parameter


def _rice_read_one(buf: BitBuffer, pos: int, parameter: int) -> tuple[int, int]:
    q = 0
    while buf.read_window(pos, 1):
        q += 1
        pos += 1
    pos += 1
    rem = buf.read_window(pos, parameter) if parameter else 0
    return (q << parameter) | rem, pos + parameter


def _rice_rebuild_skips(code: RiceCode) -> np.ndarray:
    skips = []
    pos = 0
    for j in range(code.count):
        if j % _RICE_SKIP_EVERY == 0:
            skips.append(pos)
        pos = _rice_skip_one(code.payload, pos, code.parameter)
    return np.array(skips if skips else [0], dtype=np.int64)


def rice_encode(values, parameter: int) -> RiceCode:
    """Encode non-negative integers with Rice parameter ``parameter``."""
    if not 0 <= parameter <= 60:
        raise ValueError("rice parameter outside [0, 60]")
    buf = BitBuffer()
    skips = []
    n = 0
    for v in values:
        v = int(v)
        if v < 0:
            raise ValueError("rice coding is for non-negative integers")
        if n % _RICE_SKIP_EVERY == 0:
            skips.append(len(buf))
        q = v >> parameter
        while q >= 64:
            buf.write_bits(_FULL, 64)
            q -= 64
        if q:
            buf.write_bits((1 << q) - 1, q)
        buf.write_bits(0, 1)
        if parameter:
            buf.write_bits(v & ((1 << parameter) - 1), parameter)
        n += 1
    return RiceCode(parameter, buf, n, np.array(skips if skips else [0], dtype=np.int64))


def rice_decode_at(code: RiceCode, i: int) -> int:
    return code.decode_at(i)


def rice_encoded_size(values, parameter: int) -> int:
    """Exact bit size of rice_encode(values, parameter) without encoding."""
    total = 0
    for v in values:
        total += (int(v) >> parameter) + 1 + parameter
    return total


def best_rice_parameter(values, max_parameter: int = 16) -> int:
    """Parameter in [0, max_parameter] minimizing the exact encoded size."""
    best_p, best_bits = 0, None
    for p in range(max_parameter + 1):
        bits = rice_encoded_size(values, p)
        if best_bits is None or bits < best_bits:
            best_p, best_bits = p, bits
    return best_p


# ---------------------------------------------------------------------------
# Elias-Fano

_EF_ZERO_SAMPLE_EVERY = 64
_EF_BLOB_VERSION = 1


class EliasFano:
    """Monotone sequence with strict rank(x) = #{i : values[i] < x}.

    Values are split into ``low_width`` explicit low bits and a unary-coded
    upper part: the i-th value contributes a one at upper position
    i + (value >> low_width). Upper words are LSB-first (an internal layout,
    unrelated to BitBuffer's logical order). Rank is accelerated with
    per-word cumulative one counts and a position sample every 64th zero;
    both tables are rebuilt on load.
    """

    __slots__ = (
        "universe",
        "count",
        "low_width",
        "lows",
        "upper",
        "upper_bits",
        "_cum_ones",
        "_zero_samples",
    )

    def __init__(self, universe, count, low_width, lows, upper, upper_bits):
        self.universe = universe
        self.count = count
        self.low_width = low_width
        self.lows = lows
        self.upper = upper
        self.upper_bits = upper_bits
        self._cum_ones = None
        self._zero_samples = None
        self._build_accel()

    def _build_accel(self):
        nwords = len(self.upper)
        cum = np.zeros(nwords + 1, dtype=np.int64)
        for w in range(nwords):
            cum[w + 1] = cum[w] + int(self.upper[w]).bit_count()
        self._cum_ones = cum
        samples = []
        zeros_seen = 0
        for pos in range(self.upper_bits):
            if not self._upper_bit(pos):
                if zeros_seen % _EF_ZERO_SAMPLE_EVERY == 0:
                    samples.append(pos)
                zeros_seen += 1
        self._zero_samples = np.array(samples if samples else [0], dtype=np.int64)

    def _upper_bit(self, pos: int) -> int:
        return (int(self.upper[pos >> 6]) >> (pos & 63)) & 1

    def _ones_before(self, pos: int) -> int:
        w = pos >> 6
        inside = int(self.upper[w]) & ((1 << (pos & 63)) - 1)
        return int(self._cum_ones[w]) + inside.bit_count()

    def _zero_position(self, j: int) -> int:
        """Bit position of the j-th zero (0-based) in the upper vector."""
        pos = int(self._zero_samples[j >> 6])
        remaining = j & (_EF_ZERO_SAMPLE_EVERY - 1)
        while remaining:
            pos += 1
            while self._upper_bit(pos):
                pos += 1
            remaining -= 1
        return pos

    def _low(self, i: int) -> int:
        if self.low_width == 0:
            return 0
        bitpos = i * self.low_width
        w = bitpos >> 6
        off = bitpos & 63
        val = int(self.lows[w]) >> off
        got = 64 - off
        if got < self.low_width:
            val |= int(self.lows[w + 1]) << got
        return val & ((1 << self.low_width) - 1)

    def rank_eq(self, x: int) -> tuple[int, int]:
        """(#{values < x}, #{values == x})."""
        if self.count == 0 or x <= 0:
            return 0, (0 if self.count == 0 else self._rank_eq_zero(x))
        if x >= self.universe:
            return (self.count, 0) if x > self.universe - 1 else self._scan(x)
        return self._scan(x)

    def _rank_eq_zero(self, x: int) -> int:
        return self._scan(0)[1] if x == 0 else 0

    def _scan(self, x: int) -> tuple[int, int]:
        lw = self.low_width
        xh = x >> lw
        xl = x & ((1 << lw) - 1) if lw else 0
        max_high = (self.universe - 1) >> lw if self.universe > 0 else 0
        if xh > max_high:
            return self.count, 0
        if xh == 0:
            idx, pos = 0, 0
        else:
            zp = self._zero_position(xh - 1)
            idx = self._ones_before(zp)
            pos = zp + 1
        while pos < self.upper_bits and self._upper_bit(pos) and self._low(idx) < xl:
            idx += 1
            pos += 1
        run = 0
        while pos < self.upper_bits and self._upper_bit(pos) and self._low(idx + run) == xl:
            run += 1
            pos += 1
        return idx, run

    def rank(self, x: int) -> int:
        return self.rank_eq(x)[0]

    def access(self, i: int) -> int:
        if not 0 <= i < self.count:
            raise IndexError(f"index {i} outside {self.count} values")
        # find the word holding one #i, then select within it
        w = int(np.searchsorted(self._cum_ones, i, side="right")) - 1
        ones_before = int(self._cum_ones[w])
        word = int(self.upper[w])
        need = i - ones_before
        pos = w << 6
        while True:
            if word & 1:
                if need == 0:
                    break
                need -= 1
            word >>= 1
            pos += 1
        high = pos - i
        return (high << self.low_width) | self._low(i)

    @property
    def core_bits(self) -> int:
        """Serialized payload size: low bits plus upper vector bits."""
        return self.count * self.low_width + self.upper_bits

    def to_blob(self) -> bytes:
        lows_b = self.lows.tobytes()
        upper_b = self.upper.tobytes()
        return (
            struct.pack(
                "<BQQBQQQ",
                _EF_BLOB_VERSION,
                self.universe,
                self.count,
                self.low_width,
                self.upper_bits,
                len(lows_b),
                len(upper_b),
            )
            + lows_b
            + upper_b
        )

    @classmethod
    def from_blob(cls, blob: bytes) -> tuple["EliasFano", int]:
        head = struct.calcsize("<BQQBQQQ")
        if len(blob) < head:
            raise ValueError("elias-fano blob truncated")
        version, universe, count, low_width, upper_bits, lows_len, upper_len = (
            struct.unpack_from("<BQQBQQQ", blob)
        )
        if version != _EF_BLOB_VERSION:
            raise ValueError(f"unsupported elias-fano blob version {version}")
        end = head + lows_len + upper_len
        if len(blob) < end:
            raise ValueError("elias-fano blob truncated")
        lows = np.frombuffer(blob, dtype=np.uint64, count=lows_len >> 3, offset=head)
        upper = np.frombuffer(
            blob, dtype=np.uint64, count=upper_len >> 3, offset=head + lows_len
        )
        return cls(universe, count, low_width, lows.copy(), upper.copy(), upper_bits), end


def ef_build(values, universe: int | None = None) -> EliasFano:
    """Build an Elias-Fano sequence over sorted non-negative integers."""
    vals = [int(v) for v in values]
    for a, b in zip(vals, vals[1:]):
        if b < a:
            raise ValueError("values must be non-decreasing")
    count = len(vals)
    if universe is None:
        universe = (vals[-1] + 1) if vals else 1
    if vals and vals[-1] >= universe:
        raise ValueError("value outside universe")
    if count == 0:
        return EliasFano(universe, 0, 0, np.zeros(0, np.uint64), np.zeros(0, np.uint64), 0)
    ratio = max(1, universe // count)
    low_width = max(0, ratio.bit_length() - 1)
    upper_bits = count + ((universe - 1) >> low_width) + 1
    upper = np.zeros((upper_bits + 63) >> 6, dtype=np.uint64)
    if low_width:
        lows = np.zeros(((count * low_width + 63) >> 6) + 1, dtype=np.uint64)
    else:
        lows = np.zeros(0, dtype=np.uint64)
    mask_low = (1 << low_width) - 1
    for i, v in enumerate(vals):
        pos = i + (v >> low_width)
        upper[pos >> 6] = int(upper[pos >> 6]) | (1 << (pos & 63))
        if low_width:
            bitpos = i * low_width
            w = bitpos >> 6
            off = bitpos & 63
            lows[w] = int(lows[w]) | ((v & mask_low) << off) & _FULL
            spill = (v & mask_low) >> (64 - off) if off + low_width > 64 else 0
            if off + low_width > 64:
                lows[w + 1] = int(lows[w + 1]) | spill
    return EliasFano(universe, count, low_width, lows, upper, upper_bits)


def ef_rank(seq: EliasFano, x: int) -> int:
    return seq.rank(x)


def ef_access(seq: EliasFano, i: int) -> int:
    return seq.access(i)
