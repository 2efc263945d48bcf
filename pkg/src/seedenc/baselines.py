"""The two obvious seed strategies, as executable comparison points.

MIN stores, for every process, the smallest seed that works. It needs only
1/p_i expected trials per process, but each recorded seed is geometric and
costs its full entropy: roughly log2(1/p_i) + (1 - p_i) extra bits beyond
the optimum, which the combined searcher in consensus.py avoids.

UNI stores a single seed that works for every process simultaneously. Its
message is one integer (space-optimal up to an additive constant), but the
expected number of trials is the product of all 1/p_i, so anything beyond
toy sizes needs a work cap and usually fails it.

Both builders run against any TrialOracle; uni_build has a vectorized scan
for the synthetic oracle that issues exactly the same trials (and counts
them identically) as the generic per-trial loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bitio import RiceCode, rice_encode
from .consensus import Failure
from .mixing import mix64_np
from .oracle import SyntheticOracle, TrialOracle

REASON_WORK_CAP = "work cap exceeded"

_UNI_BLOCK = 2048


@dataclass
class MinCode:
    """Rice-coded smallest successful seeds, one per process."""

    seeds: RiceCode
    probs: tuple

    @property
    def n(self) -> int:
        return self.seeds.count

    @property
    def bit_length(self) -> int:
        return self.seeds.bit_length

    @property
    def bits_per_seed(self) -> float:
        return self.seeds.bit_length / self.seeds.count


def min_rice_parameter(mean_p: float) -> int:
    """Rice parameter matched to geometric seeds: floor(log2(ln2 / mean_p))."""
    if not 0 < mean_p <= 1:
        raise ValueError("mean probability must lie in (0, 1]")
    return max(0, int(math.floor(math.log2(math.log(2) / mean_p))))


def min_build(oracle: TrialOracle) -> MinCode:
    """Scan seeds 0, 1, 2, ... per process and Rice-code the first hits."""
    seeds = []
    probs = []
    for i in range(1, oracle.n + 1):
        s = 0
        while not oracle.trial(i, s):
            s += 1
        seeds.append(s)
        probs.append(oracle.prob(i))
    parameter = min_rice_parameter(sum(probs) / len(probs))
    return MinCode(rice_encode(seeds, parameter), tuple(probs))


def min_seed(code: MinCode, i: int) -> int:
    """Decoded seed of process i (1-based)."""
    if not 1 <= i <= code.n:
        raise IndexError(f"process index {i} outside 1..{code.n}")
    return code.seeds.decode_at(i - 1)


@dataclass
class UniCode:
    """A single seed accepted by every process."""

    s_star: int
    steps: int = 0


def uni_build(oracle: TrialOracle, work_cap: int):
    """Find the smallest seed all processes accept, trying seeds in order.

    For each candidate seed the processes are tried in index order and the
    candidate is abandoned at its first rejection. Returns UniCode, or
    Failure with steps == work_cap once the budget is spent.
    """
    if work_cap < 1:
        raise ValueError("work_cap must be positive")
    if isinstance(oracle, SyntheticOracle):
        return _uni_build_synthetic(oracle, work_cap)
    return _uni_build_generic(oracle, work_cap)


def _uni_build_generic(oracle: TrialOracle, work_cap: int):
    n = oracle.n
    steps = 0
    deepest = 0
    s = 0
    while True:
        ok = True
        for i in range(1, n + 1):
            if steps >= work_cap:
                return Failure(REASON_WORK_CAP, steps, deepest)
            steps += 1
            if i > deepest:
                deepest = i
            if not oracle.trial(i, s):
                ok = False
                break
        if ok:
            return UniCode(s, steps)
        s += 1


def _uni_build_synthetic(oracle: SyntheticOracle, work_cap: int):
    """Blocked scan issuing exactly the trials of the sequential loop."""
    n = oracle.n
    pm1 = oracle.pm1_array()
    master = np.uint64(oracle.master_seed)
    index = np.arange(1, n + 1, dtype=np.uint64)
    counts = np.zeros(n, dtype=np.int64)
    block = max(1, min(_UNI_BLOCK, 4_000_000 // n))
    steps = 0
    deepest = 0
    base = 0
    while True:
        seeds = np.arange(base, base + block, dtype=np.uint64)
        shape = (block, n)
        success = (
            mix64_np(
                np.broadcast_to(master, shape),
                np.broadcast_to(index, shape),
                np.broadcast_to(seeds[:, None], shape),
            )
            <= pm1[None, :]
        )
        all_pass = np.logical_and.reduce(success, axis=1)
        # trials per seed under first-rejection short-circuiting; argmin on
        # an all-True row returns 0, so those rows are overridden with n
        row_trials = np.where(all_pass, n, np.argmin(success, axis=1) + 1)
        for row in range(block):
            t = int(row_trials[row])
            budget = work_cap - steps
            if budget < t:
                counts[:budget] += 1
                deepest = max(deepest, budget)
                oracle.add_counts(counts)
                return Failure(REASON_WORK_CAP, work_cap, deepest)
            steps += t
            counts[:t] += 1
            if t > deepest:
                deepest = t
            if all_pass[row]:
                oracle.add_counts(counts)
                return UniCode(base + row, steps)
        base += block
        oracle.add_counts(counts)
        counts[:] = 0