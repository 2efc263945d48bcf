"""seedenc: seed search and encoding for Bernoulli trial sequences.

The core solvers find, for each index i of a sequence of Bernoulli processes,
a seed that the process accepts, and store all n seeds in a single bitstring
only marginally longer than the information-theoretic minimum. On top of that
machinery sits a minimal perfect hash function built from two-way splitting
trees, with tunable space overhead.
"""

from .analysis import (
    QCurve,
    fixed_point_trace,
    lemma31_bound,
    m_opt,
    min_baseline_entropy,
    min_entropy_lower_bound,
    q_curve,
    slack_feasible,
    t_opt,
    uni_expected_work,
)
from .baselines import MinCode, UniCode, min_build, min_seed, uni_build
from .consensus import (
    ConsensusCode,
    Failure,
    FragmentSchedule,
    SolveConfig,
    build_schedule,
    decode_seed,
    solve_full,
    solve_simplified,
    verify,
)
from .mphf import (
    BuildError,
    BuildReport,
    MphfIndex,
    build_bucketed,
    build_monolithic,
    deserialize,
    query,
    query_batch,
    serialize,
    stats,
)
from .oracle import SyntheticOracle, TrialOracle

__version__ = "0.1.0"

__all__ = [
    "BuildError",
    "BuildReport",
    "ConsensusCode",
    "Failure",
    "FragmentSchedule",
    "MinCode",
    "MphfIndex",
    "QCurve",
    "SolveConfig",
    "SyntheticOracle",
    "TrialOracle",
    "UniCode",
    "build_bucketed",
    "build_monolithic",
    "build_schedule",
    "decode_seed",
    "deserialize",
    "fixed_point_trace",
    "lemma31_bound",
    "m_opt",
    "min_baseline_entropy",
    "min_build",
    "min_entropy_lower_bound",
    "min_seed",
    "q_curve",
    "query",
    "query_batch",
    "serialize",
    "slack_feasible",
    "solve_full",
    "solve_simplified",
    "stats",
    "t_opt",
    "uni_build",
    "uni_expected_work",
    "verify",
]
