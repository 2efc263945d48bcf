"""Closed-form quantities for seed search: bounds, recurrences, baselines.

Everything here is a pure double-precision function of probabilities and
branch counts. The searchers never call into this module; it exists so tests
and the CLI can compare measured behavior against what the math predicts:

* m_opt / t_opt: per-instance optima. No encoding of per-process seeds can
  beat sum(log2(1/p_i)) bits in expectation, and no searcher can expect
  fewer than 1/p_i trials for process i.
* q_curve: the survival recurrence q_i = 1 - (1 - p_i q_{i+1})^{k_i} with
  q_{n+1} = 1. Entry i is the probability that a fresh search rooted at
  process i reaches the end without backtracking out, and the per-process
  trial counts of the searchers are geometric with parameter p_i q_{i+1}.
* lemma31_bound / large_eps_bound: analytic floors on the q values, one for
  slacks eps in (0, 1] and a much stronger one for eps > 1.
* min_baseline_entropy / uni_expected_work: what the two obvious ad-hoc
  strategies must pay (bits, respectively trials), for the comparisons in
  the baselines module.

Stability note: (1 - p x)^k is always evaluated as exp(k * log1p(-p x)), so
the recurrence stays accurate for branch counts in the thousands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mixing import cost_fp_from_frac, eps_to_fp, prob_to_frac


def _survival_step(p: float, k: float, x: float) -> float:
    """1 - (1 - p x)^k, computed stably."""
    t = p * x
    if t >= 1.0:
        return 1.0
    return -math.expm1(k * math.log1p(-t))


@dataclass(frozen=True)
class QCurve:
    """Survival probabilities q_1 .. q_{n+1} with their inputs."""

    q: np.ndarray
    probs: np.ndarray
    ks: np.ndarray

    def q_at(self, i: int) -> float:
        """q_i for 1 <= i <= n+1."""
        if not 1 <= i <= len(self.q):
            raise IndexError(f"index {i} outside 1..{len(self.q)}")
        return float(self.q[i - 1])

    @property
    def n(self) -> int:
        return len(self.q) - 1


def q_curve(probs, ks) -> QCurve:
    """Backward survival recurrence from q_{n+1} = 1.

    probs and ks are per-process sequences of equal length; branch counts
    may be any reals >= 1 (the searchers use powers of two, but the
    recurrence itself does not care).
    """
    p = np.asarray([float(x) for x in probs], dtype=np.float64)
    k = np.asarray([float(x) for x in ks], dtype=np.float64)
    if p.shape != k.shape or p.ndim != 1 or len(p) == 0:
        raise ValueError("probs and ks must be equal-length non-empty sequences")
    if ((p <= 0) | (p > 1)).any():
        raise ValueError("probabilities must lie in (0, 1]")
    if (k < 1).any():
        raise ValueError("branch counts must be at least 1")
    n = len(p)
    q = np.empty(n + 1, dtype=np.float64)
    q[n] = 1.0
    for i in range(n - 1, -1, -1):
        q[i] = _survival_step(p[i], k[i], q[i + 1])
    return QCurve(q, p, k)


def fixed_point_trace(p: float, k: float, x0: float, steps: int) -> np.ndarray:
    """Iterates x0, f(x0), ..., f^steps(x0) of f(x) = 1 - (1 - p x)^k."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if not 0 <= x0 <= 1:
        raise ValueError("x0 must lie in [0, 1]")
    out = np.empty(steps + 1, dtype=np.float64)
    out[0] = x0
    x = x0
    for t in range(1, steps + 1):
        x = _survival_step(p, k, x)
        out[t] = x
    return out


def m_opt(probs) -> float:
    """Entropy lower bound on message bits: sum of log2(1/p_i)."""
    return float(sum(-math.log2(float(p)) for p in probs))


def t_opt(p) -> float:
    """Expected-trials lower bound for one process: 1/p."""
    return 1.0 / float(p)


def lemma31_bound(eps: float) -> float:
    """Worst-case floor on every q_i at slack eps in (0, 1]: 1/(64 ceil(2/eps)).

    The name is part of the public contract; the value is the constant from
    the worst-case survival argument and is far from tight in practice.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    return 1.0 / (64.0 * math.ceil(2.0 / eps))


def large_eps_bound(eps: float) -> float:
    """Survival floor 1 - exp(-2^(eps-2)), useful once eps exceeds 1."""
    return -math.expm1(-(2.0 ** (eps - 2.0)))


def min_baseline_entropy(probs) -> float:
    """Total bits any coder must spend on independent smallest-seed records.

    Each record is geometric with parameter p, whose entropy is
    (-p log2 p - (1-p) log2(1-p)) / p bits; the sum over processes lower
    bounds the MIN baseline regardless of coder.
    """
    total = 0.0
    for raw in probs:
        p = float(raw)
        if not 0 < p <= 1:
            raise ValueError("probabilities must lie in (0, 1]")
        if p < 1.0:
            total += (-p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)) / p
    return total


def min_entropy_lower_bound(probs) -> float:
    """Cheaper closed form under the geometric entropy: m_opt + sum(1 - p_i)."""
    return m_opt(probs) + float(sum(1.0 - float(p) for p in probs))


def uni_expected_work(probs) -> float:
    """Expected trials of the single-shared-seed strategy: prod(1/p_i)."""
    return 2.0 ** m_opt(probs)


def slack_feasible(probs, ks, eps, slop_bits: int = 2) -> bool:
    """Whether (probs, ks) realizes at least slack eps on every interval.

    Checks, in exact fixed point, that every contiguous interval I satisfies
    sum(log2 k_i) - sum(log2(1/p_i)) >= |I| * eps - slop_bits. Branch counts
    must be powers of two (the only kind the searchers produce); the
    survival floor lemma31_bound is asserted only over instances passing
    this gate.
    """
    ks = [int(k) for k in ks]
    probs = list(probs)
    if len(ks) != len(probs):
        raise ValueError("probs and ks must have equal length")
    ells = []
    for k in ks:
        if k < 1 or k & (k - 1):
            raise ValueError("branch counts must be powers of two")
        ells.append(k.bit_length() - 1)
    costs = [cost_fp_from_frac(prob_to_frac(p)) for p in probs]
    eps_fp = eps_to_fp(eps)
    unit = 1 << 32
    slop = slop_bits * unit
    # running prefix margin; the worst interval ending at j starts right
    # after the prefix with the largest margin seen so far
    margin = 0
    peak = 0
    for ell, cost in zip(ells, costs):
        margin += ell * unit - cost - eps_fp
        if margin - peak < -slop:
            return False
        if margin > peak:
            peak = margin
    return True
