"""Bit buffer, Rice, and Elias-Fano tests with independent reference decoders."""

import random

import numpy as np
import pytest

from seedenc.bitio import (
    BitBuffer,
    EliasFano,
    best_rice_parameter,
    ef_access,
    ef_build,
    ef_rank,
    read_window,
    read_windows,
    rice_decode_at,
    rice_encode,
    rice_encoded_size,
    write_bits,
)


def bits_of(buf: BitBuffer) -> str:
    """Independent reference: render the buffer as a 0/1 string byte by byte."""
    out = []
    data = buf.to_bytes()
    for b in range(len(buf)):
        out.append(str((data[b >> 3] >> (7 - (b & 7))) & 1))
    return "".join(out)


class TestBitBuffer:
    def test_window_example(self):
        # writing bits 1,0,1,1 then reading offset 1 width 3 gives 0b011
        buf = BitBuffer()
        for bit in (1, 0, 1, 1):
            buf.write_bits(bit, 1)
        assert buf.read_window(1, 3) == 0b011

    def test_fragment_concatenation_example(self):
        # an 4-bit initial value 5 followed by a 1-bit fragment 1 reads back
        # as the 5-bit binary concatenation 0b01011
        buf = BitBuffer()
        buf.write_bits(5, 4)
        buf.write_bits(1, 1)
        assert buf.read_window(1, 4) == 0b1011
        assert buf.read_window(0, 5) == 0b01011

    def test_msb_first_bytes(self):
        buf = BitBuffer()
        buf.write_bits(0b1010, 4)
        assert buf.to_bytes() == bytes([0b10100000])
        buf.write_bits(0xAB, 8)
        assert buf.to_bytes() == bytes([0b10101010, 0b10110000])

    def test_random_roundtrip_against_string_model(self):
        rng = random.Random(1234)
        for _ in range(50):
            buf = BitBuffer()
            model = ""
            for _ in range(rng.randrange(1, 60)):
                width = rng.randrange(0, 65)
                value = rng.getrandbits(width) if width else 0
                buf.write_bits(value, width)
                model += format(value, f"0{width}b") if width else ""
            assert len(buf) == len(model)
            assert bits_of(buf) == model
            for _ in range(40):
                if not model:
                    break
                width = rng.randrange(0, min(64, len(model)) + 1)
                off = rng.randrange(0, len(model) - width + 1)
                expect = int(model[off : off + width], 2) if width else 0
                assert buf.read_window(off, width) == expect

    def test_word_boundary_spans(self):
        buf = BitBuffer()
        buf.write_bits((1 << 60) - 1, 60)
        buf.write_bits(0b1001, 4)
        buf.write_bits(0xDEADBEEFCAFEF00D, 64)
        assert buf.read_window(60, 4) == 0b1001
        assert buf.read_window(64, 64) == 0xDEADBEEFCAFEF00D
        assert buf.read_window(62, 8) == ((0b01 << 6) | (0xDEADBEEFCAFEF00D >> 58))

    def test_bytes_roundtrip(self):
        rng = random.Random(7)
        for _ in range(30):
            buf = BitBuffer()
            total = rng.randrange(0, 300)
            for _ in range(total):
                buf.write_bits(rng.getrandbits(1), 1)
            back = BitBuffer.from_bytes(buf.to_bytes(), len(buf))
            assert back == buf
            if len(buf) >= 13:
                assert back.read_window(5, 13) == buf.read_window(5, 13)

    def test_from_words_matches_writes(self):
        buf = BitBuffer()
        buf.write_bits(0x123456789ABCDEF0, 64)
        buf.write_bits(0x5A, 7)
        wrapped = BitBuffer.from_words(buf.words().copy(), len(buf))
        assert wrapped == buf

    def test_validation(self):
        buf = BitBuffer()
        with pytest.raises(ValueError):
            buf.write_bits(2, 1)
        with pytest.raises(ValueError):
            buf.write_bits(0, 65)
        with pytest.raises(ValueError):
            buf.write_bits(-1, 4)
        buf.write_bits(3, 2)
        with pytest.raises(ValueError):
            buf.read_window(0, 3)
        with pytest.raises(ValueError):
            buf.read_window(-1, 1)

    def test_module_level_wrappers(self):
        buf = BitBuffer()
        write_bits(buf, 0b101, 3)
        assert read_window(buf, 0, 3) == 0b101


class TestRice:
    def test_zero_with_parameter_zero_is_one_bit(self):
        code = rice_encode([0], 0)
        assert code.bit_length == 1
        assert bits_of(code.payload) == "0"
        assert rice_decode_at(code, 0) == 0

    def test_five_with_parameter_two(self):
        # quotient 1 -> "10", remainder 01
        code = rice_encode([5], 2)
        assert bits_of(code.payload) == "1001"
        assert code.decode_at(0) == 5

    def test_roundtrip_all_parameters(self):
        rng = random.Random(99)
        for p in range(17):
            values = [rng.randrange(0, 5 << p) for _ in range(300)]
            values += [0, 1, (1 << p), (1 << p) - 1 if p else 0]
            code = rice_encode(values, p)
            assert code.count == len(values)
            assert code.decode_all() == values
            for i in rng.sample(range(len(values)), 40):
                assert code.decode_at(i) == values[i]
            assert code.bit_length == rice_encoded_size(values, p)

    def test_skip_pointers_cross_blocks(self):
        values = list(range(200))
        code = rice_encode(values, 3)
        for i in (0, 1, 63, 64, 65, 127, 128, 199):
            assert code.decode_at(i) == i

    def test_skips_rebuilt_when_absent(self):
        from seedenc.bitio import RiceCode

        orig = rice_encode([9, 0, 77, 3] * 40, 2)
        rebuilt = RiceCode(orig.parameter, orig.payload, orig.count)
        for i in range(rebuilt.count):
            assert rebuilt.decode_at(i) == orig.decode_at(i)

    def test_best_parameter_is_argmin(self):
        rng = random.Random(5)
        values = [rng.randrange(0, 40) for _ in range(500)]
        best = best_rice_parameter(values, 16)
        sizes = [rice_encoded_size(values, p) for p in range(17)]
        assert sizes[best] == min(sizes)

    def test_validation(self):
        with pytest.raises(ValueError):
            rice_encode([-1], 2)
        with pytest.raises(ValueError):
            rice_encode([1], 61)
        code = rice_encode([1, 2], 1)
        with pytest.raises(IndexError):
            code.decode_at(2)


class TestEliasFano:
    def test_strict_rank_example(self):
        seq = ef_build([3, 3, 7], universe=8)
        assert ef_rank(seq, 3) == 0
        assert ef_rank(seq, 4) == 2
        assert ef_rank(seq, 8) == 3
        assert ef_access(seq, 1) == 3

    def test_rank_eq_runs(self):
        seq = ef_build([3, 3, 7], universe=8)
        assert seq.rank_eq(3) == (0, 2)
        assert seq.rank_eq(7) == (2, 1)
        assert seq.rank_eq(4) == (2, 0)
        assert seq.rank_eq(0) == (0, 0)
        assert seq.rank_eq(100) == (3, 0)

    def test_empty_and_single(self):
        empty = ef_build([], universe=10)
        assert empty.rank(5) == 0
        assert empty.rank_eq(0) == (0, 0)
        one = ef_build([0], universe=1)
        assert one.access(0) == 0
        assert one.rank_eq(0) == (0, 1)
        assert one.rank(1) == 1

    def test_random_against_linear_scan(self):
        rng = random.Random(2024)
        for trial in range(6):
            count = rng.choice([1, 2, 17, 1000, 100000])
            universe = rng.choice([count, 4 * count, 64 * count, count + 1])
            values = sorted(rng.randrange(universe) for _ in range(count))
            seq = ef_build(values, universe=universe)
            arr = np.array(values)
            for x in rng.sample(range(universe + 2), min(universe + 2, 200)):
                expect_rank = int(np.searchsorted(arr, x, side="left"))
                expect_run = int(np.searchsorted(arr, x, side="right")) - expect_rank
                assert seq.rank_eq(x) == (expect_rank, expect_run), (trial, x)
            for i in rng.sample(range(count), min(count, 100)):
                assert seq.access(i) == values[i]

    def test_dense_and_sparse_extremes(self):
        dense = ef_build(list(range(500)), universe=500)
        assert dense.low_width == 0
        for x in (0, 1, 250, 499, 500):
            assert dense.rank(x) == min(x, 500)
        sparse = ef_build([0, 10**9, 2 * 10**9], universe=2 * 10**9 + 1)
        assert sparse.access(2) == 2 * 10**9
        assert sparse.rank(10**9) == 1
        assert sparse.rank(10**9 + 1) == 2

    def test_space_invariant(self):
        rng = random.Random(31)
        for count, universe in [(100, 100), (100, 1000), (1000, 1 << 20), (5000, 5001)]:
            values = sorted(rng.randrange(universe) for _ in range(count))
            seq = ef_build(values, universe=universe)
            import math

            bound = count * (2 + math.ceil(math.log2(universe / count))) + 64
            assert seq.core_bits <= bound, (count, universe, seq.core_bits, bound)

    def test_blob_roundtrip(self):
        rng = random.Random(8)
        values = sorted(rng.randrange(10000) for _ in range(700))
        seq = ef_build(values, universe=10000)
        blob = seq.to_blob()
        back, consumed = EliasFano.from_blob(blob + b"trailing")
        assert consumed == len(blob)
        assert back.universe == seq.universe
        assert back.count == seq.count
        for x in rng.sample(range(10001), 80):
            assert back.rank_eq(x) == seq.rank_eq(x)
        for i in rng.sample(range(700), 50):
            assert back.access(i) == seq.access(i)

    def test_blob_corruption(self):
        seq = ef_build([1, 5, 9], universe=16)
        blob = seq.to_blob()
        with pytest.raises(ValueError):
            EliasFano.from_blob(blob[:10])
        with pytest.raises(ValueError):
            EliasFano.from_blob(bytes([200]) + blob[1:])

    def test_validation(self):
        with pytest.raises(ValueError):
            ef_build([3, 2], universe=10)
        with pytest.raises(ValueError):
            ef_build([10], universe=10)
        seq = ef_build([1, 2], universe=4)
        with pytest.raises(IndexError):
            seq.access(2)


class TestReadWindows:
    def test_matches_scalar_reads(self):
        rng = random.Random(9)
        buf = BitBuffer(0)
        for _ in range(300):
            buf.write_bits(rng.getrandbits(13), 13)
        words = buf.words()
        for width in (1, 7, 13, 33, 64):
            top = len(buf) - width
            offsets = np.array(
                [rng.randrange(top + 1) for _ in range(200)], dtype=np.uint64
            )
            got = read_windows(words, offsets, width)
            want = [buf.read_window(int(off), width) for off in offsets]
            assert got.dtype == np.uint64
            assert [int(v) for v in got] == want

    def test_word_aligned_and_edges(self):
        buf = BitBuffer(0)
        for v in (0xDEADBEEFCAFEF00D, 0x0123456789ABCDEF):
            buf.write_bits(v, 64)
        words = buf.words()
        offsets = np.array([0, 32, 63, 64], dtype=np.uint64)
        got = read_windows(words, offsets, 64)
        assert [int(v) for v in got] == [buf.read_window(o, 64) for o in (0, 32, 63, 64)]

    def test_validation(self):
        words = np.zeros(2, dtype=np.uint64)
        with pytest.raises(ValueError):
            read_windows(words, np.array([0], dtype=np.uint64), 0)
        with pytest.raises(ValueError):
            read_windows(words, np.array([0], dtype=np.uint64), 65)
        with pytest.raises(ValueError):
            read_windows(words, np.array([65], dtype=np.uint64), 64)
