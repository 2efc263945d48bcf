"""Combined seed search and encoding over shared suffixes.

Given n Bernoulli processes behind a trial oracle, the searchers here find
per-process seeds and encode all of them into one bitstring M whose length
is fixed in advance by a fragment schedule:

* The schedule assigns process i a fragment of ell_i bits, where the pointer
  P(i) = ceil((i * eps + sum of per-process costs) in fixed point) makes
  fragment lengths track log2(1/p_i) + eps amortized, so M spends barely
  more than the entropy lower bound per process.
* The full searcher (solve_full) keeps a w-bit initial value sigma_0 and
  derives the seed for process i as the last w bits of the growing string
  sigma_0 sigma_1 ... sigma_i. Seeds of neighboring processes share a
  suffix window, which is what lets the message stay near-optimal while
  seeds remain machine words. Search is depth-first: on failure the current
  fragment is incremented, exhausted fragments backtrack, and exhaustion of
  sigma_0 itself (a masked wrap back to zero) aborts the search.
* The simplified searcher (solve_simplified) is the same search with an
  unbounded initial counter, arbitrary branch counts k_i >= 1, and exact
  mixed-radix seeds v_i = v_{i-1} * k_i + sigma_i carried as Python
  integers. It is slower and its seeds grow without bound, but it cannot
  exhaust, which makes it a good reference and measurement tool.

Decoding is trivial by construction: the seed of process i sits at bit
window [P(i), P(i) + w) of M, so decode_seed is a single window read and
verify replays one trial per process.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .bitio import BitBuffer
from .mixing import FP_UNIT, cost_fp_from_frac, eps_to_fp, prob_to_frac
from .oracle import SyntheticOracle, TrialOracle

REASON_STEP_LIMIT = "step limit reached"
REASON_EXHAUSTED = "initial segment exhausted"

_SCHEDULE_GUARD_BITS = 62


class FragmentSchedule:
    """Pointer schedule P and per-process fragment lengths.

    Costs are per-process values of ceil(log2(1/p_i) * 2**32) and eps_fp is
    the slack per process in the same fixed point. Pointers are
    P(i) = ceil((i * eps_fp + cumulative cost) / 2**32), so fragment i has
    ell_i = P(i) - P(i-1) bits and a message over this schedule has exactly
    w + P(n) bits regardless of how the search went.
    """

    __slots__ = ("n", "eps_fp", "costs_fp", "uniform", "_pointers")

    def __init__(self, costs_fp, eps_fp: int):
        costs = np.asarray(costs_fp, dtype=np.int64)
        if costs.ndim != 1 or len(costs) == 0:
            raise ValueError("schedule needs at least one process")
        if (costs < 0).any():
            raise ValueError("costs must be non-negative")
        eps_fp = int(eps_fp)
        if eps_fp < 1:
            raise ValueError("eps_fp must be at least 1")
        n = len(costs)
        if n * (eps_fp + int(costs.max())) >= 1 << _SCHEDULE_GUARD_BITS:
            raise ValueError("schedule too large for 64-bit pointer arithmetic")
        self.n = n
        self.eps_fp = eps_fp
        self.costs_fp = costs
        self.uniform = bool((costs == costs[0]).all())
        cum = np.cumsum(costs, dtype=np.int64)
        idx = np.arange(1, n + 1, dtype=np.int64)
        numer = idx * np.int64(eps_fp) + cum
        pointers = np.empty(n + 1, dtype=np.int64)
        pointers[0] = 0
        pointers[1:] = (numer + np.int64(FP_UNIT - 1)) >> np.int64(32)
        self._pointers = pointers
        if __debug__:
            # ceiling rule keeps every prefix inside one unit of slack, which
            # is the fixed-point form of the feasibility band prod(p k 2^-eps)
            # in [1, 2] over prefixes
            overshoot = (pointers[1:] << np.int64(32)) - numer
            assert int(overshoot.min()) >= 0
            assert int(overshoot.max()) < FP_UNIT

    def pointer(self, i: int) -> int:
        """P(i): total fragment bits over processes 1..i."""
        if not 0 <= i <= self.n:
            raise IndexError(f"pointer index {i} outside 0..{self.n}")
        return int(self._pointers[i])

    def fragment_len(self, i: int) -> int:
        """ell_i, the fragment width of process i."""
        if not 1 <= i <= self.n:
            raise IndexError(f"process index {i} outside 1..{self.n}")
        return int(self._pointers[i] - self._pointers[i - 1])

    def fragment_lens(self) -> np.ndarray:
        return np.diff(self._pointers)

    def k(self, i: int) -> int:
        """Branching factor of process i: 2**ell_i."""
        return 1 << self.fragment_len(i)

    def branch_counts(self) -> list[int]:
        """All branching factors, for feeding the simplified searcher."""
        return [1 << int(d) for d in np.diff(self._pointers)]

    def cost_fp(self, i: int) -> int:
        if not 1 <= i <= self.n:
            raise IndexError(f"process index {i} outside 1..{self.n}")
        return int(self.costs_fp[i - 1])

    @property
    def max_fragment(self) -> int:
        return int(np.max(np.diff(self._pointers)))

    def message_bits(self, w: int) -> int:
        """Exact message length for window width w."""
        return w + int(self._pointers[self.n])

    def expected_work(self) -> float:
        """Sum over processes of 1/p_i, reconstructed from the stored costs."""
        return float(np.exp2(self.costs_fp / FP_UNIT).sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, FragmentSchedule):
            return NotImplemented
        return self.eps_fp == other.eps_fp and np.array_equal(self.costs_fp, other.costs_fp)

    def __repr__(self) -> str:
        return (
            f"FragmentSchedule(n={self.n}, eps_fp={self.eps_fp}, "
            f"uniform={self.uniform}, bits={int(self._pointers[self.n])})"
        )


def build_schedule(source, eps) -> FragmentSchedule:
    """Schedule for a trial oracle (or an iterable of probabilities).

    eps is the per-process slack in bits; it trades message length for
    search time and must be positive. Costs are derived from the exact
    64-bit probability numerators, the same values the oracles test
    against, so two builds over the same processes always agree.
    """
    if isinstance(source, TrialOracle):
        fracs = [source.prob_frac(i) for i in range(1, source.n + 1)]
    else:
        fracs = [prob_to_frac(p) for p in source]
    eps_fp = eps_to_fp(eps)
    costs = []
    cache: dict[int, int] = {}
    for f in fracs:
        c = cache.get(f)
        if c is None:
            c = cost_fp_from_frac(f)
            cache[f] = c
        costs.append(c)
    return FragmentSchedule(costs, eps_fp)


@dataclass(frozen=True)
class SolveConfig:
    """Search knobs: window width w and the trial budget.

    step_limit of 0 asks for the default budget, 64 times the expected
    total work sum(1/p_i) / eps, which failing searches essentially never
    reach at feasible slacks.
    """

    w: int = 64
    step_limit: int = 0

    def __post_init__(self):
        if not 1 <= self.w <= 64:
            raise ValueError("w must be in [1, 64]")
        if self.step_limit < 0:
            raise ValueError("step_limit must be non-negative")

    def resolve_step_limit(self, schedule: FragmentSchedule) -> int:
        if self.step_limit:
            return self.step_limit
        eps = schedule.eps_fp / FP_UNIT
        return max(1024, math.ceil(64.0 * schedule.expected_work() / eps))


@dataclass(frozen=True)
class Failure:
    """Unsuccessful search: why, how many trials, and how deep it got."""

    reason: str
    steps: int
    deepest_index: int

    def __bool__(self) -> bool:
        return False


@dataclass
class ConsensusCode:
    """A solved instance: the message M plus the schedule that shapes it."""

    schedule: FragmentSchedule
    w: int
    bits: BitBuffer
    steps: int = 0

    @property
    def bit_length(self) -> int:
        return len(self.bits)

    def seed_at(self, i: int) -> int:
        """w-bit seed of process i (i=0 gives the initial value sigma_0)."""
        if not 0 <= i <= self.schedule.n:
            raise IndexError(f"index {i} outside 0..{self.schedule.n}")
        return self.bits.read_window(self.schedule.pointer(i), self.w)

    def fragment_at(self, i: int) -> int:
        """Raw fragment sigma_i as written, for inspection."""
        sch = self.schedule
        return self.bits.read_window(self.w + sch.pointer(i - 1), sch.fragment_len(i))

    def to_bytes(self) -> bytes:
        """Header (w, n, eps_fp, cost or cost table), then M bytes MSB-first.

        The message length is not stored: it is always w + P(n), which the
        header determines exactly.
        """
        sch = self.schedule
        head = _CODE_HEADER.pack(self.w, sch.n, sch.eps_fp, 1 if sch.uniform else 0)
        if sch.uniform:
            costs = struct.pack("<Q", int(sch.costs_fp[0]))
        else:
            costs = sch.costs_fp.astype("<u8").tobytes()
        return head + costs + self.bits.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> tuple["ConsensusCode", int]:
        if len(data) - offset < _CODE_HEADER.size:
            raise ValueError("message blob truncated")
        w, n, eps_fp, uniform = _CODE_HEADER.unpack_from(data, offset)
        offset += _CODE_HEADER.size
        if uniform not in (0, 1) or w < 1 or w > 64 or n < 1:
            raise ValueError("corrupt message header")
        if uniform:
            if len(data) - offset < 8:
                raise ValueError("message blob truncated")
            (cost,) = struct.unpack_from("<Q", data, offset)
            offset += 8
            costs = np.full(n, cost, dtype=np.int64)
        else:
            if len(data) - offset < 8 * n:
                raise ValueError("message blob truncated")
            costs = np.frombuffer(data, dtype="<u8", count=n, offset=offset).astype(np.int64)
            offset += 8 * n
        schedule = FragmentSchedule(costs, eps_fp)
        bit_len = schedule.message_bits(w)
        nbytes = (bit_len + 7) >> 3
        if len(data) - offset < nbytes:
            raise ValueError("message blob truncated")
        bits = BitBuffer.from_bytes(data[offset : offset + nbytes], bit_len)
        return cls(schedule, w, bits), offset + nbytes


_CODE_HEADER = struct.Struct("<BQQB")


@dataclass
class SimplifiedCode:
    """Result of the unbounded-counter searcher.

    Unpacks as (sigma0, fragments); fragments[i-1] is the digit chosen for
    process i, with 0 <= fragments[i-1] < ks[i-1]. The seed that process i
    accepted is the mixed-radix fold of sigma0 and the first i fragments.
    """

    sigma0: int
    fragments: list[int]
    ks: list[int]
    steps: int = 0

    def __iter__(self):
        yield self.sigma0
        yield self.fragments

    @property
    def n(self) -> int:
        return len(self.fragments)

    def seed_at(self, i: int) -> int:
        """Seed v_i of process i (i=0 gives the raw counter sigma0)."""
        if not 0 <= i <= self.n:
            raise IndexError(f"index {i} outside 0..{self.n}")
        v = self.sigma0
        for j in range(i):
            v = v * self.ks[j] + self.fragments[j]
        return v

    @property
    def value(self) -> int:
        """The deepest seed v_n."""
        return self.seed_at(self.n)


def decode_seed(code: ConsensusCode, i: int) -> int:
    """Seed of process i: one w-bit window read at P(i)."""
    if not 1 <= i <= code.schedule.n:
        raise IndexError(f"process index {i} outside 1..{code.schedule.n}")
    return code.seed_at(i)


def verify(code, oracle: TrialOracle) -> bool:
    """Replay one trial per process against the decoded seeds."""
    if oracle.n != code.schedule.n:
        raise ValueError("oracle and code disagree on process count")
    return all(oracle.trial(i, code.seed_at(i)) for i in range(1, oracle.n + 1))


# ---------------------------------------------------------------------------
# searchers


def solve_full(
    oracle: TrialOracle,
    schedule: FragmentSchedule,
    config: SolveConfig | None = None,
    engine: str = "auto",
):
    """Depth-first search with w-bit suffix seeds.

    Returns a ConsensusCode on success or a Failure when the trial budget
    runs out or the initial value space is exhausted. engine selects the
    implementation: "python" always works, "kernel" requires a
    SyntheticOracle and runs the compiled batch searcher, "auto" picks the
    kernel when it applies. Both engines produce bit-identical messages.
    """
    config = config or SolveConfig()
    if oracle.n != schedule.n:
        raise ValueError("oracle and schedule disagree on process count")
    if schedule.max_fragment > config.w:
        raise ValueError(
            f"fragment of {schedule.max_fragment} bits exceeds the {config.w}-bit window"
        )
    if engine == "auto":
        engine = "kernel" if isinstance(oracle, SyntheticOracle) else "python"
    if engine == "kernel":
        if not isinstance(oracle, SyntheticOracle):
            raise ValueError("the kernel engine needs a synthetic oracle")
        return _solve_full_kernel(oracle, schedule, config)
    if engine == "python":
        return _solve_full_python(oracle, schedule, config)
    raise ValueError(f"unknown engine {engine!r}")


def _pack_message(schedule: FragmentSchedule, w: int, sigma) -> BitBuffer:
    bits = BitBuffer(schedule.message_bits(w))
    bits.write_bits(int(sigma[0]), w)
    for i in range(1, schedule.n + 1):
        bits.write_bits(int(sigma[i]), schedule.fragment_len(i))
    return bits


def _solve_full_python(oracle, schedule, config):
    w = config.w
    mask = (1 << w) - 1
    limit = config.resolve_step_limit(schedule)
    n = schedule.n
    ell = [schedule.fragment_len(i) for i in range(1, n + 1)]
    sigma = [0] * (n + 1)
    seed = [0] * (n + 1)
    steps = 0
    deepest = 0
    i = 1
    while True:
        seed[i] = ((seed[i - 1] << ell[i - 1]) | sigma[i]) & mask
        if steps >= limit:
            return Failure(REASON_STEP_LIMIT, steps, deepest)
        steps += 1
        if i > deepest:
            deepest = i
        if oracle.trial(i, seed[i]):
            if i == n:
                return ConsensusCode(schedule, w, _pack_message(schedule, w, sigma), steps)
            i += 1
            sigma[i] = 0
            continue
        while i >= 1 and sigma[i] == (1 << ell[i - 1]) - 1:
            i -= 1
        if i == 0:
            sigma[0] = (sigma[0] + 1) & mask
            seed[0] = sigma[0]
            if sigma[0] == 0:
                return Failure(REASON_EXHAUSTED, steps, deepest)
            i = 1
            sigma[1] = 0
        else:
            sigma[i] += 1


def _solve_full_kernel(oracle: SyntheticOracle, schedule, config):
    from . import _kernels

    ell = schedule.fragment_lens().astype(np.int64)
    trials = np.zeros(schedule.n, dtype=np.int64)
    sigma = np.zeros(schedule.n + 1, dtype=np.uint64)
    status, steps, deepest = _kernels.solve_synthetic_full(
        np.uint64(oracle.master_seed),
        oracle.pm1_array(),
        ell,
        np.int64(config.w),
        np.int64(config.resolve_step_limit(schedule)),
        sigma,
        trials,
    )
    oracle.add_counts(trials)
    steps = int(steps)
    deepest = int(deepest)
    if status == 0:
        return ConsensusCode(schedule, config.w, _pack_message(schedule, config.w, sigma), steps)
    if status == 1:
        return Failure(REASON_STEP_LIMIT, steps, deepest)
    return Failure(REASON_EXHAUSTED, steps, deepest)


def solve_simplified(
    oracle: TrialOracle,
    ks,
    config: SolveConfig | None = None,
):
    """Reference searcher with an unbounded counter and exact integer seeds.

    ks gives the branch count k_i >= 1 of each process (any integers, not
    just powers of two). Seeds are the mixed-radix values
    v_i = v_{i-1} * k_i + sigma_i, so the search cannot exhaust; with the
    default step_limit of 0 it runs until it succeeds. The window width of
    the config is ignored.
    """
    config = config or SolveConfig()
    ks = [int(k) for k in ks]
    if oracle.n != len(ks):
        raise ValueError("oracle and branch counts disagree on process count")
    if any(k < 1 for k in ks):
        raise ValueError("branch counts must be at least 1")
    limit = config.step_limit
    n = len(ks)
    sigma = [0] * (n + 1)
    value = [0] * (n + 1)
    steps = 0
    deepest = 0
    i = 1
    while True:
        value[i] = value[i - 1] * ks[i - 1] + sigma[i]
        if limit and steps >= limit:
            return Failure(REASON_STEP_LIMIT, steps, deepest)
        steps += 1
        if i > deepest:
            deepest = i
        if oracle.trial(i, value[i]):
            if i == n:
                return SimplifiedCode(sigma[0], sigma[1:], ks, steps)
            i += 1
            sigma[i] = 0
            continue
        while i >= 1 and sigma[i] == ks[i - 1] - 1:
            i -= 1
        if i == 0:
            sigma[0] += 1
            value[0] = sigma[0]
            i = 1
            sigma[1] = 0
        else:
            sigma[i] += 1
