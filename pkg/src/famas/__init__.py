"""Spectrum-based failure attribution for multi-agent system execution logs.

The library replays (or simulates) a failed task several times, abstracts
every run into canonical agent-action-state triples, and ranks the failing
run's triples with a suspiciousness score built from coverage statistics,
frequency decay, and agent/action behavior factors.
"""

from .model import (
    AgentId,
    Outcome,
    Trajectory,
    TrajectorySuite,
    Triple,
    build_universe,
    load_suite,
    save_suite,
    validate_suite,
)
from .spectrum import (
    BaseCounts,
    Ranking,
    ScoreBreakdown,
    SpectrumMatrices,
    base_counts,
    build_matrices,
    classic_suspiciousness,
    composite_score,
    coverage_ratio,
    decayed_counts,
    frequency_proportion,
    kulczynski2_lambda,
    local_enhancement,
    rank_triples,
)
from .evaluate import GroundTruth, Verdict, aggregate_accuracy, judge_attribution

__version__ = "0.1.0"
