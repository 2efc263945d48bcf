"""Minimal k-perfect hashing by threshold values over a shared hash order.

Sort the key digests by a bucket hash h with range [0, n). The first k keys
in that order form bucket 1, the next k form bucket 2, and so on, with any
remainder going to a final leftover bucket. To answer queries, it is enough
to remember the boundary hash values ("thresholds"): the bucket of a key is
one plus the number of thresholds strictly below its hash, except when the
hash ties a threshold exactly. Tied keys are ambiguous among a short range
of buckets, so each one has a small bucket correction stored in a retrieval
structure consulted only on ties.

Thresholds are monotone, so they live in an Elias-Fano sequence costing
about (2 + log2 k) bits per bucket. The expected number of tied keys is
about two per bucket, and the retrieval structure stores their corrections
in one or two bits each without storing the keys themselves, so the
disambiguation adds only a lower-order term.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .bitio import BitBuffer, EliasFano, ef_build
from .mixing import mix64, mix64_np, mulhi64, mulhi64_np
from .splitter import DigestArray

# The retrieval seed is content-independent: digests are already uniform, so
# peeling failures are plain bad luck and the attempt counter walks past them.
RETRIEVAL_SALT = 0xE7A1C5B2D4963F08

_PART_BITS = 21
_PART_MASK = np.uint64((1 << _PART_BITS) - 1)


@dataclass
class Retrieval:
    """Static function from tied digests to their small bucket corrections.

    Each key owns one cell per block of the cell array; the stored value is
    the XOR of its three cells. Construction peels the random 3-uniform
    hypergraph, so lookups are exact for every key given at build time and
    arbitrary (but in-range for width bits) for any other input.
    """

    count: int
    width: int
    block: int
    attempt: int
    cells: BitBuffer

    def __post_init__(self):
        if self.block > 0 and len(self.cells) != 3 * self.block * self.width:
            raise ValueError("cell payload does not match block and width")
        if self.block == 0 and (self.count or len(self.cells)):
            raise ValueError("empty retrieval cannot hold entries")

    @property
    def bit_length(self) -> int:
        return len(self.cells)

    def get(self, hi: int, lo: int) -> int:
        if self.block == 0:
            return 0
        base = mix64(self._seed(), hi, lo)
        value = 0
        for j in range(3):
            part = (base >> (_PART_BITS * j)) & int(_PART_MASK)
            cell = j * self.block + part % self.block
            value ^= self.cells.read_window(cell * self.width, self.width)
        return value

    def _seed(self) -> int:
        return mix64(RETRIEVAL_SALT, self.attempt, 0)


def _retrieval_cells(hi, lo, attempt: int, block: int) -> np.ndarray:
    """Cell triple of every key as an (n, 3) array."""
    seed = np.uint64(mix64(RETRIEVAL_SALT, attempt, 0))
    base = mix64_np(seed, hi, lo)
    cells = np.empty((len(hi), 3), dtype=np.int64)
    for j in range(3):
        part = ((base >> np.uint64(_PART_BITS * j)) & _PART_MASK).astype(np.int64)
        cells[:, j] = j * block + part % block
    return cells


def _try_peel(cells: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray] | None:
    """Peel order plus the cell each key was alone in, or None if stuck.

    A key peels when one of its cells reaches degree one, so no key peeled
    after it shares that cell. Assignment walks the reverse peel order and
    fixes each key's equation by writing its free cell. Every later write
    targets the free cell of an earlier-peeled key, which by the same
    degree argument is not used here, so an assigned key's cells are final.
    """
    n = len(cells)
    degree = np.zeros(m, dtype=np.int64)
    owner_xor = np.zeros(m, dtype=np.int64)
    for j in range(3):
        np.add.at(degree, cells[:, j], 1)
        np.bitwise_xor.at(owner_xor, cells[:, j], np.arange(n, dtype=np.int64))
    stack = list(np.nonzero(degree == 1)[0])
    order = np.empty(n, dtype=np.int64)
    free = np.empty(n, dtype=np.int64)
    taken = 0
    while stack:
        cell = stack.pop()
        if degree[cell] != 1:
            continue
        key = owner_xor[cell]
        order[taken] = key
        free[taken] = cell
        taken += 1
        for j in range(3):
            c = cells[key, j]
            degree[c] -= 1
            owner_xor[c] ^= key
            if degree[c] == 1:
                stack.append(c)
    return (order, free) if taken == n else None


def retrieval_build(hi, lo, values) -> Retrieval:
    """Build the exact correction function for the tied digests.

    Digest pairs must be distinct. Cell count starts at 1.23 per key and
    grows slowly while deterministic seed attempts fail to peel; for the
    expected handful of keys per instance this ends on the first try almost
    always.
    """
    hi = np.asarray(hi, dtype=np.uint64)
    lo = np.asarray(lo, dtype=np.uint64)
    values = np.asarray(values, dtype=np.int64)
    n = len(values)
    if len(hi) != n or len(lo) != n:
        raise ValueError("digest halves and values disagree on length")
    if n == 0:
        return Retrieval(0, 1, 0, 0, BitBuffer(0))
    if values.min() < 0:
        raise ValueError("corrections are non-negative")
    width = max(1, int(values.max()).bit_length())
    for attempt in range(256):
        block = int(np.ceil(0.41 * n * 1.1 ** (attempt // 8))) + 1
        if block > 1 << _PART_BITS:
            raise ValueError("retrieval instance too large for its cell hash")
        cells = _retrieval_cells(hi, lo, attempt, block)
        peeled = _try_peel(cells, 3 * block)
        if peeled is None:
            continue
        order, free = peeled
        stored = np.zeros(3 * block, dtype=np.int64)
        for t in range(n - 1, -1, -1):
            key = order[t]
            c0, c1, c2 = cells[key]
            stored[free[t]] ^= values[key] ^ stored[c0] ^ stored[c1] ^ stored[c2]
        payload = BitBuffer(3 * block * width)
        for v in stored:
            payload.write_bits(int(v), width)
        return Retrieval(n, width, block, attempt, payload)
    raise ValueError("retrieval peeling failed on every attempt")


@dataclass
class KPerfect:
    """Threshold sequence plus tie corrections; maps digests to buckets."""

    n: int
    k: int
    thresholds: EliasFano | None
    disamb: Retrieval

    @property
    def num_buckets(self) -> int:
        return -(-self.n // self.k)

    @property
    def full_buckets(self) -> int:
        return self.n // self.k

    @property
    def leftover(self) -> int:
        """Number of keys in the final partial bucket (0 when k divides n)."""
        return self.n % self.k

    def threshold_bits(self) -> int:
        return self.thresholds.core_bits if self.thresholds else 0

    def disamb_bits(self) -> int:
        return self.disamb.bit_length


def bucket_hash(lo, n: int):
    """Reduce the low digest word to the range [0, n)."""
    return mulhi64_np(lo, np.uint64(n))


def kp_build(digests, k: int) -> tuple[KPerfect, DigestArray]:
    """Bucket the digests k at a time in bucket-hash order.

    Returns the KPerfect structure and the digests permuted into bucket
    order: bucket b (0-based) owns positions [b*k, (b+1)*k), with the
    n mod k leftover keys at the tail.
    """
    if not isinstance(digests, DigestArray):
        digests = DigestArray.from_digests(digests)
    n = len(digests)
    if n < 1:
        raise ValueError("need at least one key")
    if k < 2:
        raise ValueError("bucket capacity k must be at least 2")

    h = bucket_hash(digests.lo, n)
    order = np.lexsort((digests.lo, digests.hi, h))
    hi_s = digests.hi[order]
    lo_s = digests.lo[order]
    h_s = h[order]

    dup = np.nonzero((hi_s[1:] == hi_s[:-1]) & (lo_s[1:] == lo_s[:-1]))[0]
    if len(dup):
        j = int(dup[0])
        raise ValueError(
            f"duplicate key digest {int(hi_s[j]):016x}{int(lo_s[j]):016x}"
        )

    full = n // k
    t_count = full - 1 if n % k == 0 else full
    if t_count > 0:
        t_values = h_s[np.arange(1, t_count + 1) * k - 1]
        thresholds = ef_build(t_values, universe=n)
    else:
        t_values = np.empty(0, dtype=np.uint64)
        thresholds = None

    # keys whose hash ties a threshold need a stored bucket correction
    ranks = np.searchsorted(t_values, h_s, side="left")
    runs = np.searchsorted(t_values, h_s, side="right") - ranks
    tied = np.nonzero(runs > 0)[0]
    corrections = tied // k - ranks[tied]
    if len(tied):
        if corrections.min() < 0 or np.any(corrections > runs[tied]):
            raise AssertionError("tie correction outside its ambiguity range")
    disamb = retrieval_build(hi_s[tied], lo_s[tied], corrections)

    kp = KPerfect(n, k, thresholds, disamb)
    return kp, DigestArray(hi_s, lo_s)


def kp_query(kp: KPerfect, digest) -> int:
    """Bucket (1-based) of a construction-set digest."""
    hi, lo = int(digest[0]), int(digest[1])
    v = mulhi64(lo, kp.n)
    if kp.thresholds is None:
        return 1
    rank, run = kp.thresholds.rank_eq(v)
    if run == 0:
        return rank + 1
    return rank + 1 + kp.disamb.get(hi, lo)


# ---------------------------------------------------------------------------
# serialization (embedded as a section of the index container)

_KP_HEAD = struct.Struct("<BBHII")


def kp_to_bytes(kp: KPerfect) -> bytes:
    d = kp.disamb
    parts = [
        _KP_HEAD.pack(
            int(kp.thresholds is not None),
            d.width,
            d.attempt,
            d.block,
            d.count,
        ),
        d.cells.to_bytes(),
    ]
    if kp.thresholds is not None:
        parts.append(kp.thresholds.to_blob())
    return b"".join(parts)


def kp_from_bytes(buf: bytes, n: int, k: int) -> KPerfect:
    if len(buf) < _KP_HEAD.size:
        raise ValueError("k-perfect section truncated")
    has_thresholds, width, attempt, block, count = _KP_HEAD.unpack_from(buf)
    if has_thresholds not in (0, 1) or not 1 <= width <= 16:
        raise ValueError("k-perfect section corrupt")
    pos = _KP_HEAD.size
    cell_bits = 3 * block * width
    cell_bytes = (cell_bits + 7) // 8
    if len(buf) < pos + cell_bytes:
        raise ValueError("k-perfect section truncated")
    cells = BitBuffer.from_bytes(buf[pos : pos + cell_bytes], cell_bits)
    pos += cell_bytes
    disamb = Retrieval(count, width, block, attempt, cells)
    thresholds = None
    if has_thresholds:
        thresholds, used = EliasFano.from_blob(buf[pos:])
        pos += used
    if pos != len(buf):
        raise ValueError("k-perfect section has trailing bytes")
    return KPerfect(n, k, thresholds, disamb)
