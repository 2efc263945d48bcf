"""Trial oracles: the pluggable success tests driven by the seed searchers.

An oracle presents n independent Bernoulli processes, indexed 1..n. Process i
succeeds on a given seed with probability close to prob(i), independently
across (i, seed) pairs, and deterministically: the same (i, seed) always
gives the same answer. Searchers only interact with processes through this
interface, so anything from synthetic coin flips to key-set splitting tests
can sit behind it.

Probabilities are carried in two forms: a float for reporting, and an exact
64-bit dyadic numerator frac = round(p * 2**64) in [1, 2**64] that defines
the acceptance test. A trial succeeds iff the mixed seed value, viewed as a
uniform 64-bit integer, is at most frac - 1. All derived quantities
(per-index costs, pointer schedules) are computed from frac, never from the
float, so encoder and decoder agree bit for bit.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from .mixing import frac_to_float, frac_to_pm1, mix_seed, prob_to_frac


class TrialOracle(ABC):
    """n Bernoulli processes with deterministic seeded trials, 1-based."""

    @property
    @abstractmethod
    def n(self) -> int:
        """Number of processes."""

    @abstractmethod
    def prob_frac(self, i: int) -> int:
        """Success probability of process i as round(p * 2**64), in [1, 2**64]."""

    @abstractmethod
    def trial(self, i: int, seed: int) -> bool:
        """Run process i with the given seed. Counts toward trial_count(i)."""

    def prob(self, i: int) -> float:
        return frac_to_float(self.prob_frac(i))

    # -- trial accounting ---------------------------------------------------

    @abstractmethod
    def trial_count(self, i: int) -> int:
        """Trials issued against process i since the last reset."""

    @abstractmethod
    def reset_counts(self) -> None:
        """Zero all trial counters."""

    def total_trials(self) -> int:
        return sum(self.trial_count(i) for i in range(1, self.n + 1))

    def _check_index(self, i: int) -> None:
        if not 1 <= i <= self.n:
            raise IndexError(f"process index {i} outside 1..{self.n}")


class SyntheticOracle(TrialOracle):
    """Pseudo-random oracle: process i succeeds iff mix(master, i, seed) < p_i.

    The acceptance threshold is exact in 64-bit fixed point, so two oracles
    with the same master seed and probabilities are interchangeable, and the
    batched kernel path reproduces this class bit for bit.
    """

    def __init__(self, probs, master_seed: int = 0, _fracs=None):
        fracs = _fracs if _fracs is not None else [prob_to_frac(p) for p in probs]
        if not fracs:
            raise ValueError("need at least one process")
        self.master_seed = int(master_seed) & (1 << 64) - 1
        self._fracs = fracs
        self._pm1 = np.array([frac_to_pm1(f) for f in fracs], dtype=np.uint64)
        self._counts = np.zeros(len(fracs), dtype=np.int64)

    @classmethod
    def uniform(cls, n: int, p, master_seed: int = 0) -> "SyntheticOracle":
        if n < 1:
            raise ValueError("n must be positive")
        return cls(None, master_seed, _fracs=[prob_to_frac(p)] * n)

    @classmethod
    def from_fracs(cls, fracs, master_seed: int = 0) -> "SyntheticOracle":
        """Construct from pre-quantized probability numerators."""
        return cls(None, master_seed, _fracs=list(fracs))

    @property
    def n(self) -> int:
        return len(self._fracs)

    def prob_frac(self, i: int) -> int:
        self._check_index(i)
        return self._fracs[i - 1]

    def trial(self, i: int, seed: int) -> bool:
        self._check_index(i)
        self._counts[i - 1] += 1
        return mix_seed(self.master_seed, i, seed) <= int(self._pm1[i - 1])

    def trial_count(self, i: int) -> int:
        self._check_index(i)
        return int(self._counts[i - 1])

    def total_trials(self) -> int:
        return int(self._counts.sum())

    def reset_counts(self) -> None:
        self._counts[:] = 0

    # -- kernel interop ------------------------------------------------------

    def pm1_array(self) -> np.ndarray:
        """Per-process acceptance thresholds (frac - 1) for batched kernels."""
        return self._pm1

    def add_counts(self, per_index: np.ndarray) -> None:
        """Fold trial counts performed on this oracle's behalf by a kernel."""
        if len(per_index) != self.n:
            raise ValueError("count vector length mismatch")
        self._counts += per_index.astype(np.int64)
