"""Two-way splitting primitives for balanced key-partition trees.

A splitting tree assigns each tree node a seeded hash function with range
{left, right}. A seed "works" for a node when it sends exactly the intended
number of that node's keys to the left side, so finding seeds for a whole
tree is a sequence of Bernoulli processes with exactly computable success
probabilities: splitting m keys perfectly in half succeeds with probability
C(m, m/2) / 2^m on a fresh seed.

Keys enter this layer of the system as 128-bit digests (two mixed words per
raw key), so equal raw keys collide here and distinct keys essentially never
do. The digest batch helper and the split trial are the only places the raw
key bytes and the per-node hash are defined; everything above (k-perfect
bucketing, the hash index) works on digests and node keys alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels
from .mixing import digest_pair, mix64, mix64_np, prob_to_frac
from .oracle import TrialOracle


class KeyDigest(NamedTuple):
    """Two mixed 64-bit words standing in for a raw key."""

    hi: int
    lo: int


@dataclass
class DigestArray:
    """Column layout of many KeyDigests, the bulk currency of the builders."""

    hi: np.ndarray
    lo: np.ndarray

    def __post_init__(self):
        if len(self.hi) != len(self.lo):
            raise ValueError("hi and lo arrays must have equal length")

    def __len__(self) -> int:
        return len(self.hi)

    def __getitem__(self, i: int) -> KeyDigest:
        return KeyDigest(int(self.hi[i]), int(self.lo[i]))

    def __iter__(self) -> Iterator[KeyDigest]:
        for h, l in zip(self.hi, self.lo):
            yield KeyDigest(int(h), int(l))

    def take(self, order: np.ndarray) -> "DigestArray":
        return DigestArray(self.hi[order], self.lo[order])

    @classmethod
    def from_digests(cls, digests) -> "DigestArray":
        pairs = list(digests)
        hi = np.array([d[0] for d in pairs], dtype=np.uint64)
        lo = np.array([d[1] for d in pairs], dtype=np.uint64)
        return cls(hi, lo)


def digest_key(key, master_seed: int) -> KeyDigest:
    """Digest a single raw key (bytes or str) under the given master seed."""
    data = key.encode("utf-8") if isinstance(key, str) else bytes(key)
    return KeyDigest(*digest_pair(data, master_seed))


def digest_keys(keys, master_seed: int) -> DigestArray:
    """Digest a batch of raw keys via the compiled chunk hasher."""
    encoded = [k.encode("utf-8") if isinstance(k, str) else bytes(k) for k in keys]
    n = len(encoded)
    offsets = np.zeros(n + 1, dtype=np.int64)
    for j, data in enumerate(encoded):
        offsets[j + 1] = offsets[j] + len(data)
    blob = np.frombuffer(b"".join(encoded), dtype=np.uint8)
    hi = np.empty(n, dtype=np.uint64)
    lo = np.empty(n, dtype=np.uint64)
    _kernels.digest_blob(blob, offsets, np.uint64(master_seed), hi, lo)
    return DigestArray(hi, lo)


def split_bit(digest, node_key: int, seed: int) -> bool:
    """True when the digest goes to the left side of this node under seed."""
    hi = digest[0] if isinstance(digest, tuple) else int(digest)
    return mix64(node_key, hi, seed) & 1 == 0


@dataclass
class SplitTask:
    """One node's splitting problem: its keys and the target left-side size."""

    keys: object
    node_key: int
    target_left: int = field(default=-1)

    def __post_init__(self):
        m = len(self.keys)
        if m < 2:
            raise ValueError("a split needs at least two keys")
        if self.target_left < 0:
            self.target_left = (m + 1) // 2


def try_split(task: SplitTask, seed: int) -> bool:
    """True iff exactly target_left of the task's keys map left under seed."""
    m = len(task.keys)
    left = 0
    for t, digest in enumerate(task.keys):
        if split_bit(digest, task.node_key, seed):
            left += 1
            if left > task.target_left:
                return False
        elif (t + 1) - left > m - task.target_left:
            return False
    return left == task.target_left


def split_success_prob(m: int) -> float:
    """Probability C(m, m/2) / 2^m that a fresh seed splits m keys in half."""
    if m < 2 or m % 2:
        raise ValueError("perfect halving needs an even m >= 2")
    return float(Fraction(math.comb(m, m // 2), 1 << m))


def split_success_frac(m: int) -> int:
    """The halving probability as an exact 64-bit dyadic numerator."""
    if m < 2 or m % 2:
        raise ValueError("perfect halving needs an even m >= 2")
    return prob_to_frac(Fraction(math.comb(m, m // 2), 1 << m))


def uneven_split_prob(m: int, left: int) -> float:
    """Probability C(m, left) / 2^m of sending exactly `left` keys left."""
    if m < 1:
        raise ValueError("m must be positive")
    if not 0 <= left <= m:
        raise ValueError("left side size must lie in 0..m")
    return float(Fraction(math.comb(m, left), 1 << m))


class SplitLayerOracle(TrialOracle):
    """One splitting-tree layer as a sequence of Bernoulli processes.

    The layer holds count = len(hi) / m nodes of m keys each, laid out
    contiguously: node i (1-based) owns hi[(i-1)*m : i*m]. A trial asks
    whether a seed splits the node's keys exactly in half. This is the
    reference implementation; the compiled layer solver reproduces it
    bit for bit.
    """

    def __init__(self, hi: np.ndarray, m: int, node_keys: np.ndarray):
        if m < 2 or m % 2:
            raise ValueError("node size must be an even integer >= 2")
        if len(hi) % m:
            raise ValueError("key array length must be a multiple of m")
        count = len(hi) // m
        if len(node_keys) != count:
            raise ValueError("need exactly one node key per node")
        self._hi = hi
        self._m = m
        self._node_keys = node_keys
        self._frac = split_success_frac(m)
        self._counts = np.zeros(count, dtype=np.int64)

    @property
    def n(self) -> int:
        return len(self._counts)

    @property
    def node_size(self) -> int:
        return self._m

    def prob_frac(self, i: int) -> int:
        self._check_index(i)
        return self._frac

    def trial(self, i: int, seed: int) -> bool:
        self._check_index(i)
        self._counts[i - 1] += 1
        m = self._m
        half = m // 2
        bits = mix64_np(
            np.uint64(int(self._node_keys[i - 1])),
            self._hi[(i - 1) * m : i * m],
            np.uint64(seed),
        ) & np.uint64(1)
        return int(np.count_nonzero(bits == 0)) == half

    def trial_count(self, i: int) -> int:
        self._check_index(i)
        return int(self._counts[i - 1])

    def total_trials(self) -> int:
        return int(self._counts.sum())

    def reset_counts(self) -> None:
        self._counts[:] = 0

    def add_counts(self, per_index: np.ndarray) -> None:
        if len(per_index) != self.n:
            raise ValueError("count vector length mismatch")
        self._counts += per_index.astype(np.int64)
