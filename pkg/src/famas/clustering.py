"""Two-level refinement of primitive triples into canonical clusters.

Level one groups primitives by normalized agent name (exact).  Level two
runs a greedy leader pass inside each agent group: primitives are visited in
(source_run, source_step) order and joined to the first existing cluster
whose leader a pluggable semantic judge deems the same behavior, otherwise
they open a new cluster.  Cluster ids are assigned globally in creation
order, so the whole refinement is deterministic for a deterministic judge.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .abstraction import (
    DEFAULT_CHAR_BUDGET,
    ExtractionDiagnostics,
    ExtractorContract,
    PrimitiveTriple,
    RawLog,
    extract_primitives,
    load_prompt_asset,
)
from .llm import ChatCompletionClient, LlmTransportError
from .model import AgentId, Outcome, Trajectory, TrajectorySuite, Triple, normalize_label

PairKey = tuple[str, str]  # (action description, state description)


class ClusteringError(Exception):
    """Clustering could not complete (judge failure or unclustered input)."""


class JudgeContractViolation(ClusteringError):
    """A judge declared a pair different from itself."""


class SemanticJudgeContract(Protocol):
    """Decides whether two action-state pairs of one agent are the same behavior.

    Must be reflexive: same(x, x) is True for every pair x.
    """

    name: str

    def same(self, left: PairKey, right: PairKey) -> bool: ...


class ExactMatchJudge:
    """Offline default: normalized string equality on action and state."""

    name = "exact"

    def same(self, left: PairKey, right: PairKey) -> bool:
        return (normalize_label(left[0]), normalize_label(left[1])) == (
            normalize_label(right[0]),
            normalize_label(right[1]),
        )


class JudgeCache:
    """Verdict cache keyed by unordered description-pair hash.

    Safe under concurrent writers; optionally persisted to a JSON file so a
    suite's judge calls are never repeated across stages.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self._path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._verdicts: dict[str, bool] = {}
        if self._path is not None and self._path.exists():
            self._verdicts.update(json.loads(self._path.read_text(encoding="utf-8")))

    @staticmethod
    def key(left: PairKey, right: PairKey) -> str:
        canonical = json.dumps(sorted([list(left), list(right)]))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def get(self, left: PairKey, right: PairKey) -> bool | None:
        with self._lock:
            return self._verdicts.get(self.key(left, right))

    def put(self, left: PairKey, right: PairKey, verdict: bool) -> None:
        with self._lock:
            self._verdicts[self.key(left, right)] = verdict

    def save(self) -> None:
        if self._path is None:
            return
        with self._lock:
            payload = json.dumps(self._verdicts, sort_keys=True, indent=2)
        self._path.write_text(payload + "\n", encoding="utf-8")

    def __len__(self) -> int:
        with self._lock:
            return len(self._verdicts)


class LlmJudge:
    """Same/Different verdict from a chat-completion endpoint, temperature 0.

    Pairs are canonicalized (sorted) before querying so each unordered pair
    is asked exactly once; symmetry of the underlying model is not assumed.
    """

    name = "llm"

    def __init__(self, client: ChatCompletionClient, cache: JudgeCache | None = None) -> None:
        self.client = client
        self.cache = cache if cache is not None else JudgeCache()
        self.prompt, self.prompt_sha256 = load_prompt_asset("judge_prompt.txt")

    def same(self, left: PairKey, right: PairKey) -> bool:
        if left == right:
            return True
        cached = self.cache.get(left, right)
        if cached is not None:
            return cached
        first, second = sorted([left, right])
        content = self.prompt.format(
            action_a=first[0], state_a=first[1], action_b=second[0], state_b=second[1]
        )
        completion = self.client.complete([{"role": "user", "content": content}])
        verdict = completion.strip().split()[-1].strip(".").upper() == "SAME" if completion.strip() else False
        self.cache.put(left, right, verdict)
        return verdict


@dataclass(frozen=True)
class Cluster:
    """A canonical behavior: representative labels plus member provenance."""

    cluster_id: int
    agent: AgentId
    representative_action: str
    representative_state: str
    members: tuple[tuple[int, int], ...]  # (source_run, source_step), earliest first

    def to_triple(self) -> Triple:
        return Triple(
            agent=self.agent,
            action=self.representative_action,
            state=self.representative_state,
            cluster_id=self.cluster_id,
        )


def group_by_agent(primitives: Sequence[PrimitiveTriple]) -> dict[AgentId, list[PrimitiveTriple]]:
    """Partition primitives by normalized agent name, indices by first appearance."""
    if not primitives:
        raise ClusteringError("no primitives to group")
    ordered = sorted(primitives, key=lambda p: (p.source_run, p.source_step))
    index_of: dict[str, int] = {}
    groups: dict[str, list[PrimitiveTriple]] = {}
    for primitive in ordered:
        name = normalize_label(primitive.agent_name)
        if name not in index_of:
            index_of[name] = len(index_of)
            groups[name] = []
        groups[name].append(primitive)
    return {AgentId(name=name, index=index_of[name]): groups[name] for name in groups}


def cluster_action_states(
    group: Sequence[PrimitiveTriple],
    judge: SemanticJudgeContract,
    agent: AgentId,
    start_id: int = 0,
) -> list[Cluster]:
    """Greedy leader clustering of one agent group, ids from start_id upward."""
    leaders: list[PairKey] = []
    members: list[list[tuple[int, int]]] = []
    for primitive in sorted(group, key=lambda p: (p.source_run, p.source_step)):
        pair: PairKey = (primitive.action_desc, primitive.state_desc)
        placed = False
        for slot, leader in enumerate(leaders):
            try:
                verdict = judge.same(leader, pair)
            except LlmTransportError as exc:
                raise ClusteringError(f"judge failed on pair {leader!r} vs {pair!r}: {exc}") from exc
            if verdict:
                members[slot].append((primitive.source_run, primitive.source_step))
                placed = True
                break
            if leader == pair:
                raise JudgeContractViolation(
                    f"judge {judge.name!r} declared pair {pair!r} different from itself"
                )
        if not placed:
            leaders.append(pair)
            members.append([(primitive.source_run, primitive.source_step)])
    return [
        Cluster(
            cluster_id=start_id + slot,
            agent=agent,
            representative_action=leaders[slot][0],
            representative_state=leaders[slot][1],
            members=tuple(members[slot]),
        )
        for slot in range(len(leaders))
    ]


def build_clusters(
    primitives: Sequence[PrimitiveTriple], judge: SemanticJudgeContract
) -> list[Cluster]:
    """Cluster a whole suite's primitives: agent groups in index order."""
    clusters: list[Cluster] = []
    for agent, group in group_by_agent(primitives).items():
        clusters.extend(cluster_action_states(group, judge, agent, start_id=len(clusters)))
    return clusters


@dataclass(frozen=True)
class PrimitiveRun:
    """One run's primitives plus the metadata refinement needs."""

    run_id: int
    initial_state: str
    outcome: Outcome
    primitives: tuple[PrimitiveTriple, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "primitives", tuple(self.primitives))


def refine_trajectories(
    runs: Sequence[PrimitiveRun], clusters: Sequence[Cluster]
) -> list[Trajectory]:
    """Replace each primitive with its cluster's canonical triple, in place."""
    triple_at: dict[tuple[int, int], Triple] = {}
    for cluster in clusters:
        canonical = cluster.to_triple()
        for member in cluster.members:
            triple_at[member] = canonical

    trajectories: list[Trajectory] = []
    for run in sorted(runs, key=lambda r: r.run_id):
        steps: list[tuple[int, Triple]] = []
        for position, primitive in enumerate(
            sorted(run.primitives, key=lambda p: p.source_step), start=1
        ):
            key = (primitive.source_run, primitive.source_step)
            triple = triple_at.get(key)
            if triple is None:
                raise ClusteringError(f"primitive at (run {key[0]}, step {key[1]}) is unclustered")
            steps.append((position, triple))
        trajectories.append(
            Trajectory(
                id=run.run_id,
                initial_state=run.initial_state,
                outcome=run.outcome,
                steps=tuple(steps),
            )
        )
    return trajectories


@dataclass
class SuiteBuildResult:
    suite: TrajectorySuite
    clusters: list[Cluster]
    diagnostics: list[ExtractionDiagnostics] = field(default_factory=list)


def build_suite(
    logs: Sequence[RawLog],
    extractor: ExtractorContract,
    judge: SemanticJudgeContract,
    char_budget: int = DEFAULT_CHAR_BUDGET,
    task: str = "",
) -> SuiteBuildResult:
    """Abstract raw logs end to end: extract, cluster, refine, assemble."""
    runs: list[PrimitiveRun] = []
    diagnostics: list[ExtractionDiagnostics] = []
    all_primitives: list[PrimitiveTriple] = []
    initial_state = task or (f"task {logs[0].task_id}" if logs else "task")
    for log in sorted(logs, key=lambda l: l.run_id):
        extraction = extract_primitives(log, extractor, char_budget)
        diagnostics.append(extraction.diagnostics)
        runs.append(
            PrimitiveRun(
                run_id=log.run_id,
                initial_state=initial_state,
                outcome=log.outcome,
                primitives=tuple(extraction.primitives),
            )
        )
        all_primitives.extend(extraction.primitives)
    clusters = build_clusters(all_primitives, judge)
    trajectories = refine_trajectories(runs, clusters)
    suite = TrajectorySuite.build(trajectories, task_id=logs[0].task_id if logs else "")
    return SuiteBuildResult(suite=suite, clusters=clusters, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# Cluster map export, consumed by evaluation to map predictions to steps
# ---------------------------------------------------------------------------


def clusters_to_dict(clusters: Sequence[Cluster]) -> dict:
    return {
        "clusters": [
            {
                "cluster_id": cluster.cluster_id,
                "agent": cluster.agent.name,
                "action": cluster.representative_action,
                "state": cluster.representative_state,
                "members": [[run, step] for run, step in cluster.members],
            }
            for cluster in clusters
        ]
    }


def clusters_from_dict(document: dict) -> list[Cluster]:
    # agent indices follow first appearance over (run, step), as in grouping
    order: list[tuple[tuple[int, int], str]] = []
    for entry in document["clusters"]:
        members = [tuple(member) for member in entry["members"]]
        order.append((min(members), normalize_label(entry["agent"])))
    index_of: dict[str, int] = {}
    for _, name in sorted(order):
        if name not in index_of:
            index_of[name] = len(index_of)
    clusters = []
    for entry in document["clusters"]:
        name = normalize_label(entry["agent"])
        clusters.append(
            Cluster(
                cluster_id=int(entry["cluster_id"]),
                agent=AgentId(name=name, index=index_of[name]),
                representative_action=entry["action"],
                representative_state=entry["state"],
                members=tuple((int(run), int(step)) for run, step in entry["members"]),
            )
        )
    return clusters


def save_clusters(clusters: Sequence[Cluster], path: str | Path) -> None:
    Path(path).write_text(json.dumps(clusters_to_dict(clusters), indent=2) + "\n", encoding="utf-8")


def load_clusters(path: str | Path) -> list[Cluster]:
    return clusters_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
