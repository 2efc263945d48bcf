"""Schedule arithmetic, both searchers, decoding, and serialization."""

import random
from fractions import Fraction

import numpy as np
import pytest

from seedenc.consensus import (
    REASON_EXHAUSTED,
    REASON_STEP_LIMIT,
    ConsensusCode,
    Failure,
    FragmentSchedule,
    SimplifiedCode,
    SolveConfig,
    build_schedule,
    decode_seed,
    solve_full,
    solve_simplified,
    verify,
)
from seedenc.mixing import FP_UNIT, eps_to_fp, prob_to_frac
from seedenc.oracle import SyntheticOracle, TrialOracle


class AlwaysFail(TrialOracle):
    """n processes that reject every seed (advertised probability is a lie)."""

    def __init__(self, n, p=0.5):
        self._n = n
        self._frac = prob_to_frac(p)
        self._counts = [0] * n

    @property
    def n(self):
        return self._n

    def prob_frac(self, i):
        self._check_index(i)
        return self._frac

    def trial(self, i, seed):
        self._check_index(i)
        self._counts[i - 1] += 1
        return False

    def trial_count(self, i):
        self._check_index(i)
        return self._counts[i - 1]

    def reset_counts(self):
        self._counts = [0] * self._n


class TestSchedule:
    def test_uniform_quarter_example(self):
        # p = 1/4, eps = 0.5: P(i) = ceil(2.5 i), fragment lengths 3,2,3,2,...
        sch = build_schedule([0.25] * 8, 0.5)
        assert [sch.pointer(i) for i in range(9)] == [0, 3, 5, 8, 10, 13, 15, 18, 20]
        assert [sch.fragment_len(i) for i in range(1, 9)] == [3, 2, 3, 2, 3, 2, 3, 2]
        assert sch.message_bits(64) == 64 + 20
        assert sch.uniform

    def test_probability_one_eps_one(self):
        sch = build_schedule([1.0] * 5, 1)
        assert [sch.fragment_len(i) for i in range(1, 6)] == [1] * 5
        assert sch.pointer(5) == 5

    def test_half_small_eps(self):
        sch = build_schedule([0.5], 0.25)
        assert sch.pointer(1) == 2

    def test_pointers_match_exact_rational_ceiling(self):
        rng = random.Random(171)
        probs = [rng.choice([0.5, 0.25, 0.125, Fraction(1, 3), 0.9]) for _ in range(40)]
        eps = Fraction(3, 10)
        sch = build_schedule(probs, eps)
        eps_fp = eps_to_fp(eps)
        cum = 0
        for i in range(1, 41):
            cum += sch.cost_fp(i)
            exact = -((-(i * eps_fp + cum)) // FP_UNIT)
            assert sch.pointer(i) == exact

    def test_schedule_from_oracle_matches_probs(self):
        oracle = SyntheticOracle([0.5, 0.25, 0.125], master_seed=5)
        assert build_schedule(oracle, 0.5) == build_schedule([0.5, 0.25, 0.125], 0.5)

    def test_zero_length_fragments(self):
        # probability-1 processes with nearly-zero slack produce empty fragments
        sch = build_schedule([1.0] * 5, Fraction(1, 1 << 32))
        lens = [sch.fragment_len(i) for i in range(1, 6)]
        assert lens == [1, 0, 0, 0, 0]
        assert sch.message_bits(8) == 9

    def test_validation(self):
        with pytest.raises(ValueError):
            FragmentSchedule([], 1)
        with pytest.raises(ValueError):
            FragmentSchedule([-1], 1)
        with pytest.raises(ValueError):
            FragmentSchedule([0], 0)
        with pytest.raises(ValueError):
            build_schedule([0.5], 0)
        with pytest.raises(IndexError):
            build_schedule([0.5], 1).pointer(2)
        huge = [1 << 40] * (1 << 23)
        with pytest.raises(ValueError):
            FragmentSchedule(huge, 1 << 32)


class TestFullSearch:
    def test_trivial_all_success(self):
        oracle = SyntheticOracle.uniform(5, 1.0, master_seed=9)
        sch = build_schedule(oracle, 1)
        code = solve_full(oracle, sch, engine="python")
        assert isinstance(code, ConsensusCode)
        assert code.steps == 5
        assert code.bit_length == 64 + 5
        assert verify(code, oracle)

    def test_decode_window_overlap(self):
        oracle = SyntheticOracle.uniform(40, 0.25, master_seed=1234)
        sch = build_schedule(oracle, 0.5)
        code = solve_full(oracle, sch, engine="python")
        assert isinstance(code, ConsensusCode)
        mask = (1 << 64) - 1
        seed = code.seed_at(0)
        for i in range(1, 41):
            ell = sch.fragment_len(i)
            seed = ((seed << ell) | code.fragment_at(i)) & mask
            assert code.seed_at(i) == seed == decode_seed(code, i)

    def test_message_length_is_schedule_determined(self):
        for master in (1, 2, 3, 4):
            oracle = SyntheticOracle.uniform(30, 0.3, master_seed=master)
            sch = build_schedule(oracle, 0.4)
            code = solve_full(oracle, sch, engine="python")
            assert code.bit_length == sch.message_bits(64)

    def test_verify_rejects_wrong_oracle(self):
        p = 2.0**-20
        oracle = SyntheticOracle.uniform(4, p, master_seed=77)
        sch = build_schedule(oracle, 1)
        code = solve_full(oracle, sch, engine="python")
        assert verify(code, SyntheticOracle.uniform(4, p, master_seed=77))
        assert not verify(code, SyntheticOracle.uniform(4, p, master_seed=78))

    def test_small_window_and_zero_fragments(self):
        oracle = SyntheticOracle.uniform(5, 1.0, master_seed=2)
        sch = build_schedule(oracle, Fraction(1, 1 << 32))
        code = solve_full(oracle, sch, SolveConfig(w=8), engine="python")
        assert code.bit_length == 9
        assert verify(code, oracle)

    def test_step_limit_failure_is_exact(self):
        oracle = AlwaysFail(3)
        sch = build_schedule(oracle, 1)
        result = solve_full(oracle, sch, SolveConfig(step_limit=1000), engine="python")
        assert isinstance(result, Failure)
        assert not result
        assert result.reason == REASON_STEP_LIMIT
        assert result.steps == 1000
        assert oracle.trial_count(1) + oracle.trial_count(2) + oracle.trial_count(3) == 1000

    def test_initial_value_exhaustion(self):
        oracle = AlwaysFail(1, p=0.5)
        sch = build_schedule(oracle, 1)  # ell_1 = 2
        result = solve_full(oracle, sch, SolveConfig(w=4, step_limit=10**6), engine="python")
        assert isinstance(result, Failure)
        assert result.reason == REASON_EXHAUSTED
        # 16 initial values, each exploring the full 4-value fragment
        assert result.steps == 16 * 4
        assert result.deepest_index == 1

    def test_backtracking_instances_verify(self):
        rng = random.Random(555)
        for _ in range(25):
            n = rng.randrange(2, 60)
            p = rng.choice([0.1, 0.3, 0.5, 0.05])
            oracle = SyntheticOracle.uniform(n, p, master_seed=rng.getrandbits(64))
            sch = build_schedule(oracle, rng.choice([0.3, 0.5, 1]))
            code = solve_full(oracle, sch, engine="python")
            assert isinstance(code, ConsensusCode), (n, p)
            fresh = SyntheticOracle.uniform(n, p, master_seed=oracle.master_seed)
            assert verify(code, fresh)
            assert code.steps >= n

    def test_deterministic_resolve(self):
        oracle_a = SyntheticOracle.uniform(25, 0.2, master_seed=321)
        oracle_b = SyntheticOracle.uniform(25, 0.2, master_seed=321)
        sch = build_schedule(oracle_a, 0.5)
        code_a = solve_full(oracle_a, sch, engine="python")
        code_b = solve_full(oracle_b, sch, engine="python")
        assert code_a.bits == code_b.bits
        assert code_a.steps == code_b.steps

    def test_mixed_probabilities(self):
        rng = random.Random(8080)
        probs = [rng.choice([0.9, 0.5, 0.2, 0.07]) for _ in range(35)]
        oracle = SyntheticOracle(probs, master_seed=606)
        sch = build_schedule(oracle, 0.6)
        code = solve_full(oracle, sch, engine="python")
        assert verify(code, SyntheticOracle(probs, master_seed=606))

    def test_validation(self):
        oracle = SyntheticOracle.uniform(3, 0.5, master_seed=0)
        with pytest.raises(ValueError):
            solve_full(oracle, build_schedule([0.5] * 2, 1))
        with pytest.raises(ValueError):
            solve_full(oracle, build_schedule([0.5] * 3, 1), SolveConfig(w=1))
        with pytest.raises(ValueError):
            solve_full(AlwaysFail(3), build_schedule([0.5] * 3, 1), engine="kernel")
        with pytest.raises(ValueError):
            solve_full(oracle, build_schedule([0.5] * 3, 1), engine="turbo")
        with pytest.raises(ValueError):
            SolveConfig(w=0)
        with pytest.raises(ValueError):
            SolveConfig(w=65)


class TestKernelEngine:
    def test_kernel_matches_python_bit_for_bit(self):
        for master, n, p, eps in [
            (1001, 60, 0.3, 0.5),
            (2002, 200, 0.5, 0.25),
            (3003, 40, 0.1, 1),
            (4004, 150, 0.25, 0.5),
        ]:
            oracle_py = SyntheticOracle.uniform(n, p, master_seed=master)
            oracle_kr = SyntheticOracle.uniform(n, p, master_seed=master)
            sch = build_schedule(oracle_py, eps)
            code_py = solve_full(oracle_py, sch, engine="python")
            code_kr = solve_full(oracle_kr, sch, engine="kernel")
            assert isinstance(code_py, ConsensusCode)
            assert code_py.bits == code_kr.bits
            assert code_py.steps == code_kr.steps
            for i in range(1, n + 1):
                assert oracle_py.trial_count(i) == oracle_kr.trial_count(i)

    def test_kernel_failure_matches_python(self):
        # a drastically understated probability forces the step limit on both
        oracle_py = SyntheticOracle.uniform(8, 2.0**-40, master_seed=5)
        oracle_kr = SyntheticOracle.uniform(8, 2.0**-40, master_seed=5)
        sch = build_schedule(oracle_py, 1)
        cfg = SolveConfig(step_limit=5000)
        res_py = solve_full(oracle_py, sch, cfg, engine="python")
        res_kr = solve_full(oracle_kr, sch, cfg, engine="kernel")
        assert isinstance(res_py, Failure) and isinstance(res_kr, Failure)
        assert res_py == res_kr
        assert res_py.steps == 5000

    def test_auto_engine_picks_kernel_for_synthetic(self):
        oracle = SyntheticOracle.uniform(30, 0.5, master_seed=12)
        sch = build_schedule(oracle, 0.5)
        code_auto = solve_full(oracle, sch)
        code_py = solve_full(
            SyntheticOracle.uniform(30, 0.5, master_seed=12), sch, engine="python"
        )
        assert code_auto.bits == code_py.bits


class TestSearchStatistics:
    def test_expected_trials_grid(self):
        # mean per-process trials lands in [1/p, 8/(p*eps)] across slacks
        rng = random.Random(20240)
        for p, eps in [(0.5, 0.5), (0.25, 0.25), (0.0625, 0.1)]:
            n, runs = 200, 1000
            sch = build_schedule([p] * n, eps)
            total = 0
            for _ in range(runs):
                oracle = SyntheticOracle.uniform(n, p, master_seed=rng.getrandbits(64))
                code = solve_full(oracle, sch)
                assert isinstance(code, ConsensusCode)
                total += oracle.total_trials()
            mean_per_process = total / (runs * n)
            assert mean_per_process >= 1 / p, (p, eps, mean_per_process)
            assert mean_per_process <= 8 / (p * eps), (p, eps, mean_per_process)

    def test_large_slack_mode(self):
        # eps=4 drives per-process trials to within 10% of the 1/p optimum
        rng = random.Random(4242)
        n, runs, p = 200, 300, 0.25
        sch = build_schedule([p] * n, 4)
        total = 0
        for _ in range(runs):
            oracle = SyntheticOracle.uniform(n, p, master_seed=rng.getrandbits(64))
            code = solve_full(oracle, sch)
            assert isinstance(code, ConsensusCode)
            total += oracle.total_trials()
        mean = total / (runs * n)
        assert 3.9 <= mean <= 4.4, mean

    def test_failure_rate_at_default_budget(self):
        rng = random.Random(31337)
        n, p, eps = 10_000, 0.25, 0.25
        sch = build_schedule([p] * n, eps)
        limit = int(64 * n / (p * eps))
        failures = 0
        for _ in range(100):
            oracle = SyntheticOracle.uniform(n, p, master_seed=rng.getrandbits(64))
            result = solve_full(oracle, sch, SolveConfig(step_limit=limit))
            if isinstance(result, Failure):
                failures += 1
        assert failures <= 1


class TestSimplified:
    def test_seeds_verify_and_decode(self):
        oracle = SyntheticOracle.uniform(30, 0.5, master_seed=41)
        sch = build_schedule(oracle, 0.5)
        code = solve_simplified(oracle, sch.branch_counts())
        assert isinstance(code, SimplifiedCode)
        sigma0, fragments = code
        assert sigma0 == code.sigma0 and fragments == code.fragments
        assert all(0 <= s < k for s, k in zip(fragments, code.ks))
        fresh = SyntheticOracle.uniform(30, 0.5, master_seed=41)
        for i in range(1, 31):
            assert fresh.trial(i, code.seed_at(i))
        assert code.seed_at(30) == code.value

    def test_mixed_radix_prefix_relation(self):
        oracle = SyntheticOracle.uniform(12, 0.3, master_seed=90)
        sch = build_schedule(oracle, 0.5)
        code = solve_simplified(oracle, sch.branch_counts())
        for i in range(1, 13):
            shift = sum(sch.fragment_len(j) for j in range(i + 1, 13))
            assert code.seed_at(i) == code.value >> shift

    def test_probability_one_takes_first_path(self):
        oracle = SyntheticOracle.uniform(3, 1.0, master_seed=6)
        code = solve_simplified(oracle, [1, 3, 7])
        assert code.sigma0 == 0
        assert code.fragments == [0, 0, 0]
        assert code.steps == 3

    def test_general_radix_counter_distribution(self):
        # n=1, p=1/2, k=2: seeds are tried in order 0,1,2,..., so sigma0 is
        # floor(V/2) for V geometric; its mean is 1/3
        total = 0
        for master in range(300):
            oracle = SyntheticOracle.uniform(1, 0.5, master_seed=master)
            code = solve_simplified(oracle, [2])
            assert SyntheticOracle.uniform(1, 0.5, master_seed=master).trial(1, code.value)
            total += code.sigma0
        assert 0.2 <= total / 300 <= 0.47

    def test_never_exhausts_where_full_would(self):
        # with a 5-bit window the full search wraps its initial value; the
        # simplified one keeps counting and still lands a solution
        oracle = SyntheticOracle.uniform(6, 0.05, master_seed=1)
        sch = build_schedule(oracle, 0.25)
        full = solve_full(oracle, sch, SolveConfig(w=5, step_limit=10**7), engine="python")
        assert isinstance(full, Failure)
        assert full.reason == REASON_EXHAUSTED
        assert full.steps == 4096
        simple = solve_simplified(
            SyntheticOracle.uniform(6, 0.05, master_seed=1), sch.branch_counts()
        )
        assert isinstance(simple, SimplifiedCode)
        assert simple.steps == 55

    def test_radix_five_total_work(self):
        # k=5 gives slack eps = log2(5/4) per process; mean total trials
        # stays under 8 * n / (p * eps)
        import math

        eps = math.log2(5 / 4)
        n, p, runs = 100, 0.25, 60
        total = 0
        for master in range(runs):
            oracle = SyntheticOracle.uniform(n, p, master_seed=9000 + master)
            code = solve_simplified(oracle, [5] * n)
            assert isinstance(code, SimplifiedCode)
            total += code.steps
        assert total / runs <= 8 * n / (p * eps)
        assert total / runs >= n

    def test_step_limit(self):
        result = solve_simplified(AlwaysFail(2), [2, 2], SolveConfig(step_limit=77))
        assert isinstance(result, Failure)
        assert result.steps == 77

    def test_validation(self):
        oracle = SyntheticOracle.uniform(2, 0.5, master_seed=0)
        with pytest.raises(ValueError):
            solve_simplified(oracle, [2])
        with pytest.raises(ValueError):
            solve_simplified(oracle, [2, 0])


class TestCodeSerialization:
    def test_uniform_roundtrip(self):
        oracle = SyntheticOracle.uniform(20, 0.25, master_seed=3)
        sch = build_schedule(oracle, 0.5)
        code = solve_full(oracle, sch, engine="python")
        blob = code.to_bytes()
        back, consumed = ConsensusCode.from_bytes(blob + b"extra")
        assert consumed == len(blob)
        assert back.schedule == code.schedule
        assert back.w == code.w
        assert back.bits == code.bits
        assert verify(back, SyntheticOracle.uniform(20, 0.25, master_seed=3))

    def test_non_uniform_roundtrip(self):
        probs = [0.9, 0.25, 0.5, 0.1, 0.75]
        oracle = SyntheticOracle(probs, master_seed=8)
        sch = build_schedule(oracle, 0.3)
        assert not sch.uniform
        code = solve_full(oracle, sch, engine="python")
        back, _ = ConsensusCode.from_bytes(code.to_bytes())
        assert back.schedule == code.schedule
        assert back.bits == code.bits

    def test_truncation_and_corruption(self):
        oracle = SyntheticOracle.uniform(4, 0.5, master_seed=2)
        code = solve_full(oracle, build_schedule(oracle, 1), engine="python")
        blob = code.to_bytes()
        for cut in (0, 5, len(blob) - 1):
            with pytest.raises(ValueError):
                ConsensusCode.from_bytes(blob[:cut])
        bad = bytearray(blob)
        bad[17] = 9  # uniform flag byte becomes invalid
        with pytest.raises(ValueError):
            ConsensusCode.from_bytes(bytes(bad))
