"""Tests for threshold-based minimal k-perfect hashing."""

import numpy as np
import pytest

from seedenc.kperfect import (
    KPerfect,
    Retrieval,
    bucket_hash,
    kp_build,
    kp_from_bytes,
    kp_query,
    kp_to_bytes,
    retrieval_build,
)
from seedenc.mixing import mulhi64
from seedenc.splitter import DigestArray, KeyDigest


def lo_for_hash(target: int, n: int) -> int:
    """A low word whose bucket hash lands exactly on target."""
    lo = ((2 * target + 1) << 63) // n
    while mulhi64(lo, n) > target:
        lo -= 1
    while mulhi64(lo, n) < target:
        lo += 1
    return lo


def crafted(hash_values, n, hi_values=None):
    his = hi_values if hi_values is not None else range(1, len(hash_values) + 1)
    return DigestArray.from_digests(
        KeyDigest(int(h), lo_for_hash(t, n)) for h, t in zip(his, hash_values)
    )


def random_digests(rng, count):
    info = np.iinfo(np.uint64)
    return DigestArray(
        rng.integers(0, info.max, size=count, dtype=np.uint64),
        rng.integers(0, info.max, size=count, dtype=np.uint64),
    )


class TestRetrieval:
    def test_exact_on_support(self):
        rng = np.random.default_rng(310)
        n = 500
        info = np.iinfo(np.uint64)
        hi = rng.integers(0, info.max, size=n, dtype=np.uint64)
        lo = rng.integers(0, info.max, size=n, dtype=np.uint64)
        values = rng.integers(0, 4, size=n)
        r = retrieval_build(hi, lo, values)
        assert r.count == n
        assert r.width == max(1, int(values.max()).bit_length())
        for t in range(n):
            assert r.get(int(hi[t]), int(lo[t])) == values[t]

    def test_small_supports(self):
        for n in (1, 2, 3):
            hi = np.arange(1, n + 1, dtype=np.uint64)
            lo = np.arange(101, 101 + n, dtype=np.uint64)
            values = np.arange(n) % 2
            r = retrieval_build(hi, lo, values)
            for t in range(n):
                assert r.get(int(hi[t]), int(lo[t])) == values[t]

    def test_empty(self):
        r = retrieval_build([], [], [])
        assert r.count == 0
        assert r.bit_length == 0
        assert r.get(123, 456) == 0

    def test_deterministic(self):
        hi = np.array([5, 6, 7], dtype=np.uint64)
        lo = np.array([8, 9, 10], dtype=np.uint64)
        a = retrieval_build(hi, lo, [1, 0, 1])
        b = retrieval_build(hi, lo, [1, 0, 1])
        assert a.attempt == b.attempt
        assert a.cells.to_bytes() == b.cells.to_bytes()

    def test_duplicate_digest_cannot_peel(self):
        hi = np.array([5, 5], dtype=np.uint64)
        lo = np.array([8, 8], dtype=np.uint64)
        with pytest.raises(ValueError, match="peeling failed"):
            retrieval_build(hi, lo, [0, 1])

    def test_validation(self):
        with pytest.raises(ValueError, match="disagree"):
            retrieval_build([1, 2], [3], [0, 0])
        with pytest.raises(ValueError, match="non-negative"):
            retrieval_build([1], [2], [-1])


class TestBuildShapes:
    def test_single_bucket(self):
        rng = np.random.default_rng(31)
        digests = random_digests(rng, 8)
        kp, ordered = kp_build(digests, k=8)
        assert kp.thresholds is None
        assert kp.disamb.count == 0
        assert kp.num_buckets == 1
        assert kp.leftover == 0
        assert sorted(ordered) == sorted(digests)
        for d in digests:
            assert kp_query(kp, d) == 1

    def test_two_buckets_distinct_hashes(self):
        n, k = 16, 8
        digests = crafted(range(n), n)
        kp, ordered = kp_build(digests, k)
        assert kp.thresholds is not None
        assert kp.thresholds.count == 1
        assert kp.thresholds.access(0) == 7
        # only the key sitting exactly on the threshold is ambiguous
        assert kp.disamb.count == 1
        for pos, d in enumerate(ordered):
            assert kp_query(kp, d) == pos // k + 1
        # a key strictly between thresholds resolves by rank alone
        strict = ordered[3]
        v = int(bucket_hash(np.uint64(strict.lo), n))
        rank, run = kp.thresholds.rank_eq(v)
        assert run == 0 and rank == 0

    def test_leftover_bucket_sizes(self):
        n, k = 10, 4
        rng = np.random.default_rng(32)
        digests = random_digests(rng, n)
        kp, ordered = kp_build(digests, k)
        assert kp.num_buckets == 3
        assert kp.full_buckets == 2
        assert kp.leftover == 2
        counts = [0] * kp.num_buckets
        for d in digests:
            counts[kp_query(kp, d) - 1] += 1
        assert counts == [4, 4, 2]

    def test_duplicate_digest_rejected(self):
        digests = DigestArray.from_digests(
            [KeyDigest(1, 2), KeyDigest(3, 4), KeyDigest(1, 2)]
        )
        with pytest.raises(ValueError, match="duplicate key digest"):
            kp_build(digests, k=2)

    def test_validation(self):
        rng = np.random.default_rng(33)
        with pytest.raises(ValueError):
            kp_build(random_digests(rng, 4), k=1)
        with pytest.raises(ValueError):
            kp_build(DigestArray.from_digests([]), k=2)


class TestExactness:
    def test_every_bucket_exactly_k(self):
        n, k = 100_000, 256
        rng = np.random.default_rng(34)
        digests = random_digests(rng, n)
        kp, ordered = kp_build(digests, k)
        counts = np.zeros(kp.num_buckets, dtype=np.int64)
        for d in ordered:
            counts[kp_query(kp, d) - 1] += 1
        assert np.all(counts[: kp.full_buckets] == k)
        assert counts[-1] == n % k

    def test_query_matches_build_position(self):
        n, k = 20_000, 64
        rng = np.random.default_rng(35)
        digests = random_digests(rng, n)
        kp, ordered = kp_build(digests, k)
        for pos in range(n):
            expected = min(pos // k, kp.num_buckets - 1) + 1
            assert kp_query(kp, ordered[pos]) == expected

    def test_space_and_table_bounds(self):
        n, k = 100_000, 256
        rng = np.random.default_rng(36)
        kp, _ = kp_build(random_digests(rng, n), k)
        per_key_bound = (2 + np.log2(k)) / k * 1.1
        assert kp.threshold_bits() <= per_key_bound * n
        # about two tied keys per threshold, stored in one or two bits each
        assert 0 < kp.disamb.count <= 4 * n / k
        assert kp.disamb_bits() <= 8 * n / k


class TestAmbiguity:
    def test_tied_keys_need_corrections(self):
        # h = [0, 1, 1, 1, 2, 3]: the three tied keys straddle a threshold
        n, k = 6, 2
        digests = crafted([0, 1, 1, 1, 2, 3], n)
        kp, ordered = kp_build(digests, k)
        assert kp.thresholds.count == 2
        assert kp.disamb.count == 3
        for pos, d in enumerate(ordered):
            assert kp_query(kp, d) == pos // k + 1

    def test_tied_keys_with_shared_hi_bits(self):
        # tied keys agreeing on their low 32 hi bits still resolve, since
        # the retrieval hashes the full digest
        n, k = 4, 2
        hi_values = [(1 << 32) | 0xDEADBEEF, (2 << 32) | 0xDEADBEEF, 3, 4]
        digests = crafted([1, 1, 0, 2], n, hi_values)
        kp, ordered = kp_build(digests, k)
        for pos, d in enumerate(ordered):
            assert kp_query(kp, d) == pos // k + 1

    def test_run_of_equal_thresholds(self):
        # twelve keys on one hash value cover three whole buckets, so the
        # threshold sequence repeats and corrections span [0, run]
        n, k = 16, 4
        values = [0, 1] + [5] * 12 + [9, 11]
        digests = crafted(values, n)
        kp, ordered = kp_build(digests, k)
        for pos, d in enumerate(ordered):
            assert kp_query(kp, d) == pos // k + 1


class TestSerialization:
    def build_sample(self, seed=38, n=5000, k=16):
        rng = np.random.default_rng(seed)
        digests = random_digests(rng, n)
        kp, ordered = kp_build(digests, k)
        return kp, ordered

    def test_round_trip(self):
        kp, ordered = self.build_sample()
        blob = kp_to_bytes(kp)
        back = kp_from_bytes(blob, kp.n, kp.k)
        assert back.n == kp.n and back.k == kp.k
        assert back.disamb.count == kp.disamb.count
        assert back.disamb.width == kp.disamb.width
        assert back.disamb.block == kp.disamb.block
        assert back.disamb.attempt == kp.disamb.attempt
        assert kp_to_bytes(back) == blob
        for d in ordered:
            assert kp_query(back, d) == kp_query(kp, d)

    def test_round_trip_no_thresholds(self):
        kp, _ = self.build_sample(n=16, k=16)
        back = kp_from_bytes(kp_to_bytes(kp), 16, 16)
        assert back.thresholds is None

    def test_corruption_detected(self):
        kp, _ = self.build_sample()
        blob = kp_to_bytes(kp)
        with pytest.raises(ValueError):
            kp_from_bytes(blob[:-3], kp.n, kp.k)
        with pytest.raises(ValueError):
            kp_from_bytes(blob + b"\x00", kp.n, kp.k)
        with pytest.raises(ValueError):
            kp_from_bytes(blob[:4], kp.n, kp.k)
