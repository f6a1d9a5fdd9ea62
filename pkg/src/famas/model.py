"""Canonical data model for abstracted execution trajectories.

A trajectory is an ordered sequence of agent-action-state triples plus an
initial state and a success/failure outcome.  A suite bundles the failing
trajectory under attribution (always id 0) with the replayed trajectories
and the universe of distinct triples observed anywhere in the suite.

Triples are canonical: their identity is the cluster id assigned during
abstraction, not their surface text.  All types here are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

SUITE_FILE_VERSION = "1"


def normalize_label(name: str) -> str:
    """Normalize an agent label: trim, collapse inner whitespace, case-fold."""
    return " ".join(name.split()).casefold()


class Outcome(Enum):
    SUCCESS = "success"
    FAILURE = "failure"

    def to_bit(self) -> int:
        """Outcome-vector encoding: success is 1, failure is 0."""
        return 1 if self is Outcome.SUCCESS else 0

    @classmethod
    def from_bit(cls, bit: int) -> "Outcome":
        if bit not in (0, 1):
            raise ValueError(f"outcome bit must be 0 or 1, got {bit!r}")
        return cls.SUCCESS if bit == 1 else cls.FAILURE

    @classmethod
    def from_label(cls, label: str) -> "Outcome":
        value = normalize_label(label)
        for outcome in cls:
            if outcome.value == value:
                return outcome
        raise ValueError(f"unknown outcome label {label!r}")


@dataclass(frozen=True)
class AgentId:
    """Agent identity: normalized name plus suite-local ordinal index."""

    name: str
    index: int

    def __post_init__(self) -> None:
        normalized = normalize_label(self.name)
        if not normalized:
            raise ValueError("agent name is empty after normalization")
        object.__setattr__(self, "name", normalized)
        if self.index < 0:
            raise ValueError("agent index must be non-negative")


@dataclass(frozen=True, eq=False)
class Triple:
    """One canonical agent-action-state step unit.

    Equality and hashing are by cluster_id only: two triples are the same
    behavior exactly when abstraction assigned them the same cluster.
    """

    agent: AgentId
    action: str
    state: str
    cluster_id: int

    def __post_init__(self) -> None:
        if not self.action:
            raise ValueError("triple action label is empty")
        if not self.state:
            raise ValueError("triple state label is empty")
        if self.cluster_id < 0:
            raise ValueError("cluster_id must be non-negative")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Triple):
            return NotImplemented
        return self.cluster_id == other.cluster_id

    def __hash__(self) -> int:
        return hash(self.cluster_id)

    def label(self) -> str:
        return f"{self.agent.name}:{self.action}->{self.state}"


@dataclass(frozen=True)
class Trajectory:
    """Ordered triples of one run. id 0 is reserved for the failing run."""

    id: int
    initial_state: str
    steps: tuple[tuple[int, Triple], ...]  # (1-based step index, triple)
    outcome: Outcome

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def length(self) -> int:
        return len(self.steps)

    def triples(self) -> list[Triple]:
        return [triple for _, triple in self.steps]

    def frequency_of(self, triple: Triple) -> int:
        return sum(1 for _, t in self.steps if t == triple)

    def member_steps(self, triple: Triple) -> list[int]:
        """1-based step indices at which the triple occurs in this run."""
        return [idx for idx, t in self.steps if t == triple]


@dataclass(frozen=True)
class SuiteViolation:
    """One invariant violation found by validate_suite (data, not a fault)."""

    trajectory_id: int | None
    step_index: int | None
    message: str

    def __str__(self) -> str:
        where = ""
        if self.trajectory_id is not None:
            where = f"trajectory {self.trajectory_id}"
            if self.step_index is not None:
                where += f" step {self.step_index}"
            where += ": "
        return where + self.message


@dataclass(frozen=True)
class TrajectorySuite:
    """The failing trajectory plus its replays and the triple universe."""

    trajectories: tuple[Trajectory, ...]
    universe: tuple[Triple, ...]
    agents: tuple[AgentId, ...]
    task_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        object.__setattr__(self, "universe", tuple(self.universe))
        object.__setattr__(self, "agents", tuple(self.agents))

    @classmethod
    def build(cls, trajectories: Sequence[Trajectory], task_id: str = "") -> "TrajectorySuite":
        """Assemble a suite, deriving the universe and agent set.

        Empty trajectories are rejected here rather than silently scored.
        """
        if not trajectories:
            raise ValueError("suite needs at least one trajectory")
        for trajectory in trajectories:
            if trajectory.length == 0:
                raise ValueError(f"trajectory {trajectory.id} has no steps")
        universe = build_universe(trajectories)
        agents = sorted({t.agent for t in universe}, key=lambda a: a.index)
        return cls(
            trajectories=tuple(trajectories),
            universe=tuple(universe),
            agents=tuple(agents),
            task_id=task_id,
        )

    @property
    def failing(self) -> Trajectory:
        return self.trajectories[0]

    @property
    def k(self) -> int:
        """Number of replayed trajectories (suite size minus the failing run)."""
        return len(self.trajectories) - 1

    def candidates(self) -> list[Triple]:
        """Universe triples present in the failing trajectory, ascending cluster_id."""
        present = {t.cluster_id for t in self.failing.triples()}
        return [t for t in self.universe if t.cluster_id in present]


def build_universe(trajectories: Iterable[Trajectory]) -> list[Triple]:
    """Deduplicated union of all triples, ordered by ascending cluster_id."""
    seen: dict[int, Triple] = {}
    for trajectory in trajectories:
        for _, triple in trajectory.steps:
            seen.setdefault(triple.cluster_id, triple)
    return [seen[cid] for cid in sorted(seen)]


def validate_suite(suite: TrajectorySuite) -> list[SuiteViolation]:
    """Check every suite invariant; an empty list means the suite is valid."""
    violations: list[SuiteViolation] = []

    if not suite.trajectories:
        return [SuiteViolation(None, None, "suite has no trajectories")]

    if suite.trajectories[0].outcome is not Outcome.FAILURE:
        violations.append(SuiteViolation(0, None, "root trajectory not failing"))

    for trajectory in suite.trajectories:
        if trajectory.length == 0:
            violations.append(SuiteViolation(trajectory.id, None, "trajectory has no steps"))
            continue
        for position, (step_index, _) in enumerate(trajectory.steps, start=1):
            if step_index != position:
                violations.append(
                    SuiteViolation(
                        trajectory.id,
                        step_index,
                        f"step index {step_index} at position {position}; expected contiguous 1..T",
                    )
                )

    universe_ids = {t.cluster_id for t in suite.universe}
    for trajectory in suite.trajectories:
        for step_index, triple in trajectory.steps:
            if triple.cluster_id not in universe_ids:
                violations.append(
                    SuiteViolation(
                        trajectory.id,
                        step_index,
                        f"universe omits triple {triple.label()} (cluster {triple.cluster_id})",
                    )
                )

    observed_ids = {t.cluster_id for traj in suite.trajectories for t in traj.triples()}
    for triple in suite.universe:
        if triple.cluster_id not in observed_ids:
            violations.append(
                SuiteViolation(
                    None, None, f"universe lists unseen triple {triple.label()} (cluster {triple.cluster_id})"
                )
            )

    agent_indices = {a.index for a in suite.agents}
    agent_names = {a.index: a.name for a in suite.agents}
    if len(agent_indices) != len(suite.agents):
        violations.append(SuiteViolation(None, None, "duplicate agent index in suite"))
    for triple in suite.universe:
        if triple.agent.index not in agent_indices:
            violations.append(
                SuiteViolation(None, None, f"agent {triple.agent.name!r} missing from suite agents")
            )
        elif agent_names[triple.agent.index] != triple.agent.name:
            violations.append(
                SuiteViolation(
                    None,
                    None,
                    f"agent index {triple.agent.index} bound to both "
                    f"{agent_names[triple.agent.index]!r} and {triple.agent.name!r}",
                )
            )

    return violations


# ---------------------------------------------------------------------------
# Refined-trajectory file format (one JSON document per suite)
# ---------------------------------------------------------------------------


def suite_to_dict(suite: TrajectorySuite) -> dict:
    return {
        "version": SUITE_FILE_VERSION,
        "task_id": suite.task_id,
        "trajectories": [
            {
                "id": trajectory.id,
                "initial_state": trajectory.initial_state,
                "outcome": trajectory.outcome.value,
                "steps": [
                    {
                        "index": step_index,
                        "agent": triple.agent.name,
                        "action": triple.action,
                        "state": triple.state,
                        "cluster_id": triple.cluster_id,
                    }
                    for step_index, triple in trajectory.steps
                ],
            }
            for trajectory in suite.trajectories
        ],
    }


def suite_from_dict(document: dict) -> TrajectorySuite:
    version = str(document.get("version", ""))
    if version != SUITE_FILE_VERSION:
        raise ValueError(f"unsupported suite file version {version!r}")

    agent_index: dict[str, int] = {}
    triple_cache: dict[int, Triple] = {}
    trajectories: list[Trajectory] = []
    for entry in document["trajectories"]:
        steps: list[tuple[int, Triple]] = []
        for step in entry["steps"]:
            name = normalize_label(step["agent"])
            if name not in agent_index:
                agent_index[name] = len(agent_index)
            cluster_id = int(step["cluster_id"])
            triple = triple_cache.get(cluster_id)
            if triple is None:
                triple = Triple(
                    agent=AgentId(name=name, index=agent_index[name]),
                    action=step["action"],
                    state=step["state"],
                    cluster_id=cluster_id,
                )
                triple_cache[cluster_id] = triple
            steps.append((int(step["index"]), triple))
        trajectories.append(
            Trajectory(
                id=int(entry["id"]),
                initial_state=entry["initial_state"],
                outcome=Outcome.from_label(entry["outcome"]),
                steps=tuple(steps),
            )
        )
    return TrajectorySuite.build(trajectories, task_id=document.get("task_id", ""))


def save_suite(suite: TrajectorySuite, path: str | Path) -> None:
    Path(path).write_text(json.dumps(suite_to_dict(suite), indent=2) + "\n", encoding="utf-8")


def load_suite(path: str | Path) -> TrajectorySuite:
    return suite_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
