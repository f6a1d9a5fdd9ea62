"""Shared fixtures, including the worked four-trajectory suite used throughout.

The worked suite ("star suite"): agents A1/A2, triples
  eta1 = <A1, search, badResult>   cluster 1
  eta2 = <A1, search, goodResult>  cluster 2
  eta3 = <A2, plan, planMade>      cluster 0
Trajectories: tau0 Failure [eta3, eta1, eta1]; tau1 Failure [eta3, eta1];
tau2 Success [eta3, eta2]; tau3 Success [eta3, eta2].
Cluster ids follow agent-major first-appearance order (A2 appears first).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from famas.model import AgentId, Outcome, Trajectory, TrajectorySuite, Triple


@dataclass(frozen=True)
class StarSuite:
    suite: TrajectorySuite
    eta1: Triple
    eta2: Triple
    eta3: Triple


@pytest.fixture(scope="session")
def star() -> StarSuite:
    a2 = AgentId(name="a2", index=0)
    a1 = AgentId(name="a1", index=1)
    eta3 = Triple(agent=a2, action="plan", state="planMade", cluster_id=0)
    eta1 = Triple(agent=a1, action="search", state="badResult", cluster_id=1)
    eta2 = Triple(agent=a1, action="search", state="goodResult", cluster_id=2)
    trajectories = [
        Trajectory(0, "task", ((1, eta3), (2, eta1), (3, eta1)), Outcome.FAILURE),
        Trajectory(1, "task", ((1, eta3), (2, eta1)), Outcome.FAILURE),
        Trajectory(2, "task", ((1, eta3), (2, eta2)), Outcome.SUCCESS),
        Trajectory(3, "task", ((1, eta3), (2, eta2)), Outcome.SUCCESS),
    ]
    return StarSuite(
        suite=TrajectorySuite.build(trajectories, task_id="star"),
        eta1=eta1,
        eta2=eta2,
        eta3=eta3,
    )
