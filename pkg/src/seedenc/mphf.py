"""Minimal perfect hashing built from shared seed-search messages.

The index maps n distinct keys onto {1..n} with no gaps and no collisions.
Keys are first digested to 128 bits, then routed k at a time into buckets
by a k-perfect outer layer, and each bucket is taken down to singletons by
a binary splitting tree. The splitting seeds are not stored per node:
every tree level across all buckets forms one batch of dependent search
processes, and a single message per level encodes all of its seeds at a
per-process overhead of roughly eps bits. The n mod k keys that do not
fill a bucket fall back to a small splitting tree with explicitly coded
seeds.

Space is dominated by the within-bucket entropy log2(k**k / k!) / k plus
the bucketing layer's thresholds, approaching the log2(e) bits/key floor
as k grows and eps shrinks. Build time rises in exchange, at a rate close
to proportional in 1/eps.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .bitio import BitBuffer, RiceCode, best_rice_parameter, read_windows, rice_encode
from .consensus import (
    ConsensusCode,
    FragmentSchedule,
    SolveConfig,
    _pack_message,
)
from .kperfect import KPerfect, kp_build, kp_from_bytes, kp_query, kp_to_bytes
from .mixing import MASK64, cost_fp_from_frac, eps_to_fp, hash_bytes, mix64, mix64_np
from .splitter import (
    DigestArray,
    digest_key,
    digest_keys,
    split_bit,
    split_success_frac,
)

MAGIC = b"CRSM"
VERSION = 1

# Tags keep the per-node trial streams of different tree levels (and the
# fallback tree) independent: a node's key is master ^ (tag << 54) ^ index,
# with tag = level + 1 for the shared-message levels.
NODE_TAG_SHIFT = 54
FALLBACK_TAG = 0xFB

# Salt folded into the master seed when a build attempt hits its step limit.
RETRY_SALT = 0xA77E
MAX_BUILD_ATTEMPTS = 5

CHECKSUM_SALT = 0x1F83D9ABFB41BD6B

_HEADER = struct.Struct("<4sHQQIQBB")
_SECTION_LEN = struct.Struct("<Q")
_FALLBACK_HEAD = struct.Struct("<IBQ")


class BuildError(RuntimeError):
    """Raised when every build attempt failed."""


def node_key(master: int, tag: int, index: int) -> int:
    """Per-node trial stream identity for splitting trees."""
    return (int(master) ^ (int(tag) << NODE_TAG_SHIFT) ^ int(index)) & MASK64


def _node_keys(master: int, tag: int, count: int) -> np.ndarray:
    base = np.uint64((int(master) ^ (int(tag) << NODE_TAG_SHIFT)) & MASK64)
    return base ^ np.arange(count, dtype=np.uint64)


def auto_bucket_size(eps: float) -> int:
    """Bucket capacity balancing threshold overhead against slack: the
    largest power of two not above (1/eps)**(4/3)."""
    if not 0 < eps <= 1:
        raise ValueError("eps must be in (0, 1]")
    return max(2, 1 << int(math.floor((4.0 / 3.0) * math.log2(1.0 / eps))))


# ---------------------------------------------------------------------------
# fallback tree for the leftover keys


@dataclass
class FallbackTree:
    """Splitting tree over the n mod k leftover keys, seeds coded per node.

    Internal nodes are numbered in preorder: a node over m keys sends
    ceil(m/2) of them left, its left child is id+1 and its right child
    id + ceil(m/2). Leaves are not numbered; a key's value is the count of
    leaves to its left.
    """

    count: int
    seeds: RiceCode | None

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("negative key count")
        if self.count <= 1:
            if self.seeds is not None:
                raise ValueError("a tree this small has no internal nodes")
        elif self.seeds is None or self.seeds.count != self.count - 1:
            raise ValueError("seed stream does not match the key count")

    @property
    def bit_length(self) -> int:
        return self.seeds.bit_length if self.seeds is not None else 0

    def leaf_of(self, hi: int, master: int) -> int:
        """0-based leaf index of a digest's high word."""
        size = self.count
        node = 0
        leaf = 0
        while size > 1:
            lhalf = (size + 1) // 2
            s = self.seeds.decode_at(node)
            if split_bit(hi, node_key(master, FALLBACK_TAG, node), s):
                size = lhalf
                node += 1
            else:
                leaf += lhalf
                node += lhalf
                size -= lhalf
        return leaf

    def seed_array(self) -> np.ndarray:
        if self.count <= 1:
            return np.empty(0, dtype=np.uint64)
        return np.array(self.seeds.decode_all(), dtype=np.uint64)


def _build_fallback(hi: np.ndarray, master: int) -> tuple[FallbackTree, int]:
    """Search minimal per-node seeds; returns the tree and trials spent."""
    c = len(hi)
    if c <= 1:
        return FallbackTree(c, None), 0
    seeds = [0] * (c - 1)
    trials = 0
    stack = [(0, np.array(hi, dtype=np.uint64, copy=True))]
    while stack:
        nid, seg = stack.pop()
        m = len(seg)
        target = (m + 1) // 2
        key = np.uint64(node_key(master, FALLBACK_TAG, nid))
        s = 0
        while True:
            if s > MASK64:
                raise BuildError("fallback split seed space exhausted")
            went_left = (mix64_np(key, seg, np.uint64(s)) & np.uint64(1)) == 0
            trials += 1
            if int(went_left.sum()) == target:
                break
            s += 1
        seeds[nid] = s
        left = seg[went_left]
        right = seg[~went_left]
        if target > 1:
            stack.append((nid + 1, left))
        if m - target > 1:
            stack.append((nid + target, right))
    parameter = best_rice_parameter(seeds)
    return FallbackTree(c, rice_encode(seeds, parameter)), trials


# ---------------------------------------------------------------------------
# the index


@dataclass
class MphfIndex:
    """Minimal perfect hash function over a fixed key set.

    layers[l] is the shared message of tree level l (nodes of 2**-l bucket
    fraction each); its schedule covers the level's nodes in bucket-major
    order. All split decisions and the bucketing layer derive from
    master_seed, so the index is a pure function of (keys, parameters,
    master_seed).
    """

    master_seed: int
    n: int
    k: int
    eps_fp: int
    w: int
    kperfect: KPerfect
    layers: list[ConsensusCode]
    fallback: FallbackTree
    _arrays: dict = field(default=None, repr=False, compare=False)

    @property
    def full_buckets(self) -> int:
        return self.n // self.k

    @property
    def depth(self) -> int:
        return len(self.layers)

    def _query_arrays(self) -> dict:
        if self._arrays is not None:
            return self._arrays
        kp = self.kperfect
        if kp.thresholds is None:
            t_values = np.empty(0, dtype=np.uint64)
        else:
            t_values = np.array(
                [kp.thresholds.access(i) for i in range(kp.thresholds.count)],
                dtype=np.uint64,
            )
        disamb = kp.disamb
        pers = np.array(
            [int(code.schedule.costs_fp[0]) + code.schedule.eps_fp for code in self.layers],
            dtype=np.uint64,
        )
        base = 0
        bit_bases = np.zeros(len(self.layers), dtype=np.int64)
        parts = []
        for l, code in enumerate(self.layers):
            bit_bases[l] = base
            words = code.bits.words()
            parts.append(words)
            base += 64 * len(words)
        words = np.concatenate(parts) if parts else np.empty(0, dtype=np.uint64)
        self._arrays = {
            "t_values": t_values,
            "r_seed": np.uint64(disamb._seed()),
            "r_width": np.int64(disamb.width),
            "r_block": np.int64(disamb.block),
            "r_cells": np.ascontiguousarray(disamb.cells.words()),
            "pers": pers,
            "bit_bases": bit_bases,
            "words": np.ascontiguousarray(words),
            "fb_seeds": self.fallback.seed_array(),
        }
        return self._arrays


def query(index: MphfIndex, key) -> int:
    """1-based value of a construction-set key (others map arbitrarily)."""
    return query_digest(index, digest_key(key, index.master_seed))


def query_digest(index: MphfIndex, digest) -> int:
    """Pure-Python query path; the batch kernel must agree with it."""
    hi, lo = int(digest[0]) & MASK64, int(digest[1]) & MASK64
    b = kp_query(index.kperfect, (hi, lo)) - 1
    full = index.full_buckets
    if b >= full:
        if index.fallback.count > 0:
            leaf = index.fallback.leaf_of(hi, index.master_seed)
            return full * index.k + leaf + 1
        b = full - 1
    path = 0
    for l, code in enumerate(index.layers):
        i0 = b * (1 << l) + path
        seed = code.seed_at(i0 + 1)
        bit = 0 if split_bit(hi, node_key(index.master_seed, l + 1, i0), seed) else 1
        path = (path << 1) | bit
    return b * index.k + path + 1


def query_batch(index: MphfIndex, keys) -> np.ndarray:
    """Vectorized queries; keys may also be a prepared DigestArray."""
    if isinstance(keys, DigestArray):
        digests = keys
    else:
        digests = digest_keys(keys, index.master_seed)
    arr = index._query_arrays()
    out = np.empty(len(digests), dtype=np.int64)
    _kernels.query_batch(
        digests.hi,
        digests.lo,
        np.int64(index.n),
        np.int64(index.k),
        np.int64(index.full_buckets),
        arr["t_values"],
        arr["r_seed"],
        arr["r_width"],
        arr["r_block"],
        arr["r_cells"],
        np.uint64(index.master_seed),
        arr["pers"],
        arr["bit_bases"],
        arr["words"],
        np.int64(index.w),
        arr["fb_seeds"],
        np.int64(index.fallback.count),
        out,
    )
    return out


# ---------------------------------------------------------------------------
# construction


@dataclass
class BuildReport:
    """What one successful build cost."""

    n: int
    k: int
    eps: float
    bits_per_key: float
    layer_trials: list[int]
    fallback_trials: int
    retries: int
    wasted_trials: int
    seconds: float

    @property
    def total_trials(self) -> int:
        return sum(self.layer_trials) + self.fallback_trials + self.wasted_trials

    @property
    def trials_per_key(self) -> float:
        return self.total_trials / self.n


class _LevelFailed(Exception):
    def __init__(self, level: int, reason: str, trials: int):
        super().__init__(f"level {level}: {reason}")
        self.trials = trials


def _solve_levels(
    ordered_hi: np.ndarray,
    buckets: int,
    k: int,
    eps_fps: list[int],
    w: int,
    step_limit: int,
    master: int,
) -> tuple[list[ConsensusCode], list[int], np.ndarray]:
    """Solve every tree level over the bucketed prefix of the digests.

    Level l covers buckets * 2**l nodes of k / 2**l keys each, contiguous
    in ordered_hi. After each level the keys are permuted so that a node's
    left half precedes its right half, which makes the next level
    contiguous again and leaves the prefix in final leaf order.
    """
    depth = k.bit_length() - 1
    hi = np.array(ordered_hi, dtype=np.uint64, copy=True)
    layers: list[ConsensusCode] = []
    trials_per_level: list[int] = []
    for l in range(depth):
        m = k >> l
        count = buckets << l
        cost = cost_fp_from_frac(split_success_frac(m))
        per = cost + eps_fps[l]
        if count * per >= 1 << 62:
            raise ValueError("schedule pointers would overflow 64-bit arithmetic")
        schedule = FragmentSchedule(np.full(count, cost, dtype=np.int64), eps_fps[l])
        limit = SolveConfig(w=w, step_limit=step_limit).resolve_step_limit(schedule)
        keys = _node_keys(master, l + 1, count)
        sigma = np.zeros(count + 1, dtype=np.uint64)
        trials = np.zeros(count, dtype=np.int64)
        status, steps, _deepest = _kernels.solve_split_layer(
            hi,
            np.int64(m),
            keys,
            schedule.fragment_lens().astype(np.int64),
            np.int64(w),
            np.int64(limit),
            sigma,
            trials,
        )
        trials_per_level.append(int(trials.sum()))
        if status != 0:
            reason = "step limit reached" if status == 1 else "seed space exhausted"
            raise _LevelFailed(l, reason, sum(trials_per_level))
        code = ConsensusCode(schedule, w, _pack_message(schedule, w, sigma), int(steps))
        layers.append(code)

        # route every key one level down: stable partition within each node
        pointers = np.asarray(schedule._pointers[1:], dtype=np.int64)
        seeds = read_windows(code.bits.words(), pointers, w)
        node_of = np.repeat(np.arange(count, dtype=np.int64), m)
        bits = (mix64_np(keys[node_of], hi, seeds[node_of]) & np.uint64(1)).astype(np.int64)
        lefts = m - np.add.reduceat(bits, np.arange(count, dtype=np.int64) * m)
        if not (lefts == m // 2).all():
            raise AssertionError("solved seeds do not split their nodes in half")
        hi = hi[np.lexsort((np.arange(len(hi)), bits, node_of))]
    return layers, trials_per_level, hi


def _build_once(
    keys,
    k: int,
    eps_fp: int,
    eps_fps_fn,
    w: int,
    step_limit: int,
    master: int,
) -> tuple[MphfIndex, list[int], int]:
    digests = digest_keys(keys, master)
    kp, ordered = kp_build(digests, k)
    n = len(ordered)
    buckets = n // k
    if buckets > 0:
        depth = k.bit_length() - 1
        eps_fps = [eps_fps_fn(k >> l) for l in range(depth)]
        layers, level_trials, _final_hi = _solve_levels(
            ordered.hi[: buckets * k], buckets, k, eps_fps, w, step_limit, master
        )
    else:
        layers, level_trials = [], []
    fallback, fb_trials = _build_fallback(ordered.hi[buckets * k :], master)
    index = MphfIndex(master, n, k, eps_fp, w, kp, layers, fallback)
    return index, level_trials, fb_trials


def _build_with_retries(keys, k, eps, eps_fp, eps_fps_fn, w, step_limit, master_seed):
    started = time.perf_counter()
    master_seed = int(master_seed) & MASK64
    wasted = 0
    last_error: Exception | None = None
    for attempt in range(MAX_BUILD_ATTEMPTS):
        master = master_seed if attempt == 0 else mix64(master_seed, RETRY_SALT, attempt)
        try:
            index, level_trials, fb_trials = _build_once(
                keys, k, eps_fp, eps_fps_fn, w, step_limit, master
            )
        except _LevelFailed as err:
            wasted += err.trials
            last_error = err
            continue
        except ValueError as err:
            if "duplicate key digest" not in str(err):
                raise
            last_error = err
            continue
        report = BuildReport(
            n=index.n,
            k=k,
            eps=eps,
            bits_per_key=8.0 * len(serialize(index)) / index.n,
            layer_trials=level_trials,
            fallback_trials=fb_trials,
            retries=attempt,
            wasted_trials=wasted,
            seconds=time.perf_counter() - started,
        )
        return index, report
    if isinstance(last_error, ValueError):
        raise ValueError(
            "keys are not distinct (identical digests on every attempt): "
            f"{last_error}"
        )
    raise BuildError(
        f"no index after {MAX_BUILD_ATTEMPTS} attempts; last error: {last_error}"
    )


def build_bucketed(
    keys,
    eps: float,
    k: int | str = "auto",
    w: int = 64,
    step_limit: int = 0,
    master_seed: int = 0,
) -> tuple[MphfIndex, BuildReport]:
    """Build the index with one shared message per tree level per bucket set.

    eps is the per-node overhead in bits; lower values shrink the index and
    lengthen the search, with build trials growing at a rate close to 1/eps.
    The analysis wants eps no smaller than n**(-3/7), but any value in
    (0, 1] that survives the step limit produces a correct index. k must be
    a power of two at least 2 (or "auto" to derive one from eps); keys in
    short supply (n < k) all go through the explicit fallback tree.
    """
    n = len(keys)
    if n < 1:
        raise ValueError("need at least one key")
    if not 0 < eps <= 1:
        raise ValueError(f"eps {eps} outside (0, 1]")
    if k == "auto":
        k = auto_bucket_size(eps)
    k = int(k)
    if k < 2 or k & (k - 1):
        raise ValueError(f"bucket capacity {k} is not a power of two >= 2")
    if k > 0xFFFFFFFF:
        raise ValueError("bucket capacity does not fit the index header")
    if not 1 <= w <= 64:
        raise ValueError(f"window width {w} outside [1, 64]")
    eps_fp = eps_to_fp(eps)
    return _build_with_retries(
        keys, k, eps, eps_fp, lambda m: eps_fp, w, step_limit, master_seed
    )


def build_monolithic(
    keys,
    eps: float,
    w: int = 64,
    step_limit: int = 0,
    master_seed: int = 0,
) -> tuple[MphfIndex, BuildReport]:
    """Single splitting tree over all n = 2**d keys, no bucketing layer.

    Level overhead follows the size of the nodes: a level of m-key nodes
    gets min(1, eps * m**0.75) bits per node, so wide nodes near the root
    carry almost no slack and the total overhead stays near 6 * eps * n
    bits. eps may range over [1/n, 1].
    """
    n = len(keys)
    if n < 2 or n & (n - 1):
        raise ValueError(f"key count {n} is not a power of two >= 2")
    if n > 0xFFFFFFFF:
        raise ValueError("key count does not fit the index header")
    if not 1.0 / n <= eps <= 1.0:
        raise ValueError(f"eps {eps} outside [1/n, 1]")
    if not 1 <= w <= 64:
        raise ValueError(f"window width {w} outside [1, 64]")

    def eps_for(m: int) -> int:
        return eps_to_fp(min(1.0, eps * float(m) ** 0.75))

    return _build_with_retries(
        keys, n, eps, eps_to_fp(eps), eps_for, w, step_limit, master_seed
    )


# ---------------------------------------------------------------------------
# serialization


def _fallback_to_bytes(fb: FallbackTree) -> bytes:
    if fb.count <= 1:
        return _FALLBACK_HEAD.pack(fb.count, 0, 0)
    head = _FALLBACK_HEAD.pack(fb.count, fb.seeds.parameter, fb.seeds.bit_length)
    return head + fb.seeds.payload.to_bytes()


def _fallback_from_bytes(buf: bytes) -> FallbackTree:
    if len(buf) < _FALLBACK_HEAD.size:
        raise ValueError("fallback section truncated")
    count, parameter, bit_len = _FALLBACK_HEAD.unpack_from(buf)
    body = buf[_FALLBACK_HEAD.size :]
    if count <= 1:
        if bit_len or body:
            raise ValueError("fallback section length mismatch")
        return FallbackTree(count, None)
    if len(body) != (bit_len + 7) // 8:
        raise ValueError("fallback section length mismatch")
    payload = BitBuffer.from_bytes(body, bit_len)
    return FallbackTree(count, RiceCode(parameter, payload, count - 1))


def _sections(index: MphfIndex) -> tuple[bytes, list[bytes]]:
    head = _HEADER.pack(
        MAGIC,
        VERSION,
        index.master_seed,
        index.n,
        index.k,
        index.eps_fp,
        index.w,
        len(index.layers),
    )
    parts = [kp_to_bytes(index.kperfect)]
    parts.extend(code.to_bytes() for code in index.layers)
    parts.append(_fallback_to_bytes(index.fallback))
    return head, parts


def serialize(index: MphfIndex) -> bytes:
    """Self-contained bytes: header, length-prefixed sections, checksum."""
    head, parts = _sections(index)
    body = b"".join(_SECTION_LEN.pack(len(p)) + p for p in parts)
    blob = head + body
    return blob + struct.pack("<Q", hash_bytes(blob, CHECKSUM_SALT))


def deserialize(data: bytes) -> MphfIndex:
    """Parse and verify; any corruption raises ValueError before decoding."""
    if len(data) < _HEADER.size + 8:
        raise ValueError("index blob truncated")
    (stored,) = struct.unpack_from("<Q", data, len(data) - 8)
    if hash_bytes(data[:-8], CHECKSUM_SALT) != stored:
        raise ValueError("index checksum mismatch: corrupt or not an index")
    magic, version, master, n, k, eps_fp, w, layer_count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("not an index blob (bad magic)")
    if version != VERSION:
        raise ValueError(f"unsupported index version {version}")
    if n < 1 or k < 2 or k & (k - 1) or not 1 <= w <= 64:
        raise ValueError("corrupt index header")
    expected_layers = k.bit_length() - 1 if n // k > 0 else 0
    if layer_count != expected_layers:
        raise ValueError("corrupt index header (layer count)")

    offset = _HEADER.size
    end = len(data) - 8
    sections = []
    for _ in range(layer_count + 2):
        if end - offset < 8:
            raise ValueError("index blob truncated")
        (length,) = _SECTION_LEN.unpack_from(data, offset)
        offset += 8
        if end - offset < length:
            raise ValueError("index blob truncated")
        sections.append(data[offset : offset + length])
        offset += length
    if offset != end:
        raise ValueError("index blob has trailing bytes")

    kp = kp_from_bytes(sections[0], n, k)
    layers = []
    buckets = n // k
    for l in range(layer_count):
        code, consumed = ConsensusCode.from_bytes(sections[1 + l])
        if consumed != len(sections[1 + l]):
            raise ValueError("message section length mismatch")
        if code.schedule.n != buckets << l or code.w != w:
            raise ValueError("message section shape mismatch")
        layers.append(code)
    fallback = _fallback_from_bytes(sections[-1])
    if fallback.count != n - buckets * k:
        raise ValueError("fallback section shape mismatch")
    return MphfIndex(master, n, k, eps_fp, w, kp, layers, fallback)


@dataclass(frozen=True)
class IndexStats:
    """Exact serialized size, split by section."""

    n: int
    header_bits: int
    kperfect_bits: int
    layer_bits: tuple[int, ...]
    fallback_bits: int

    @property
    def total_bits(self) -> int:
        return self.header_bits + self.kperfect_bits + sum(self.layer_bits) + self.fallback_bits

    @property
    def bits_per_key(self) -> float:
        return self.total_bits / self.n


def stats(index: MphfIndex) -> IndexStats:
    """Size breakdown; total_bits equals 8 * len(serialize(index)) exactly.

    Length prefixes and the checksum count as header (structural) bits.
    """
    head, parts = _sections(index)
    structural = 8 * (len(head) + 8 * len(parts) + 8)
    return IndexStats(
        n=index.n,
        header_bits=structural,
        kperfect_bits=8 * len(parts[0]),
        layer_bits=tuple(8 * len(p) for p in parts[1:-1]),
        fallback_bits=8 * len(parts[-1]),
    )
