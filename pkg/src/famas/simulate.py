"""Replay collection and the synthetic turn-based MAS simulator.

Production replays delegate task execution to a pluggable runner (including
a subprocess adapter configured through FAMAS_RUNNER_CMD).  Offline, a
seeded simulator fabricates whole log suites with an injectable decisive
error and an exact ground truth, so attribution accuracy can be measured
without any real agents.

Simulator semantics are closed-world: a run fails exactly when it takes the
decisive error action, and every step after the first error is drawn from
"affected" variants of the normal behavior, so failure-correlated signal
exists for the spectrum stage to find.  Each run has its own RNG stream
derived from (scenario seed, run id), which makes suites byte-reproducible
and independent of generation order.
"""

from __future__ import annotations

import bisect
import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import random

from .abstraction import RawLog, RulesExtractor
from .clustering import Cluster, ExactMatchJudge, SuiteBuildResult, build_suite
from .evaluate import GroundTruth
from .model import Outcome, TrajectorySuite, normalize_label


class ScenarioError(Exception):
    """Invalid synthetic scenario definition."""


class RunnerError(Exception):
    """One replay run failed to produce a usable log."""


class SuiteInsufficiencyError(Exception):
    """Too few usable replays for spectrum analysis."""


@dataclass(frozen=True)
class Distribution:
    """Small discrete distribution over positive integers, JSON-friendly."""

    weights: tuple[tuple[int, float], ...]  # (value, weight), ascending values

    def __post_init__(self) -> None:
        if not self.weights:
            raise ScenarioError("distribution needs at least one value")
        total = sum(w for _, w in self.weights)
        if total <= 0 or any(w < 0 for _, w in self.weights):
            raise ScenarioError("distribution weights must be non-negative with positive sum")

    @classmethod
    def fixed(cls, value: int) -> "Distribution":
        return cls(weights=((value, 1.0),))

    @classmethod
    def uniform(cls, low: int, high: int) -> "Distribution":
        if high < low:
            raise ScenarioError(f"uniform range [{low}, {high}] is empty")
        return cls(weights=tuple((v, 1.0) for v in range(low, high + 1)))

    @classmethod
    def categorical(cls, counts: dict) -> "Distribution":
        return cls(weights=tuple(sorted((int(v), float(w)) for v, w in counts.items())))

    def sample(self, rng: random.Random) -> int:
        values = [v for v, _ in self.weights]
        cumulative: list[float] = []
        running = 0.0
        for _, weight in self.weights:
            running += weight
            cumulative.append(running)
        point = rng.random() * running
        return values[bisect.bisect_right(cumulative, point)]

    def mean(self) -> float:
        total = sum(w for _, w in self.weights)
        return sum(v * w for v, w in self.weights) / total

    def to_json(self) -> dict:
        return {str(v): w for v, w in self.weights}

    @classmethod
    def from_json(cls, document) -> "Distribution":
        if isinstance(document, dict) and "fixed" in document:
            return cls.fixed(int(document["fixed"]))
        if isinstance(document, dict) and "uniform" in document:
            low, high = document["uniform"]
            return cls.uniform(int(low), int(high))
        if isinstance(document, dict):
            return cls.categorical(document)
        raise ScenarioError(f"cannot parse distribution from {document!r}")


@dataclass(frozen=True)
class AgentSpec:
    name: str
    actions: tuple[str, ...]
    weight: float = 1.0  # relative share of routine steps this agent takes


@dataclass(frozen=True)
class DecisiveError:
    agent: str
    action: str
    error_state: str


@dataclass(frozen=True)
class SyntheticScenario:
    """Generator parameters for one synthetic task.

    The designated ground truth is the decisive error; p_error is the chance
    a replayed run takes the error action.  Noise knobs: replan_probability
    adds a failure-only orchestration step after the first error,
    recovery_probability adds a repeated failure-only repair attempt by the
    agent after the erring one, and decoy_error_text makes one benign decoy
    state carry a scary "Error:" wording in both outcomes.
    """

    task_id: str
    agents: tuple[AgentSpec, ...]
    decisive_error: DecisiveError
    p_error: float
    retry_profile: Distribution
    length_profile: Distribution
    seed: int
    task: str = ""
    opening_plan_probability: float = 0.6
    replan_probability: float = 0.9
    recovery_probability: float = 0.75
    recovery_tau0_probability: float = 0.35
    recovery_profile: Distribution = field(default_factory=lambda: Distribution.fixed(2))
    decoy_error_text: bool = True

    def __post_init__(self) -> None:
        if not self.agents:
            raise ScenarioError("scenario needs at least one agent")
        if not 0.0 < self.p_error < 1.0:
            raise ScenarioError(f"p_error must lie strictly between 0 and 1, got {self.p_error}")
        repertoire = {
            normalize_label(agent.name): {normalize_label(a) for a in agent.actions} for agent in self.agents
        }
        err_agent = normalize_label(self.decisive_error.agent)
        if err_agent not in repertoire:
            raise ScenarioError(f"decisive-error agent {self.decisive_error.agent!r} not in scenario agents")
        if normalize_label(self.decisive_error.action) not in repertoire[err_agent]:
            raise ScenarioError(
                f"decisive-error action {self.decisive_error.action!r} not in {self.decisive_error.agent!r}'s repertoire"
            )
        if any(v < 1 for v, _ in self.retry_profile.weights):
            raise ScenarioError("retry_profile values must be >= 1")
        if any(v < 2 for v, _ in self.length_profile.weights):
            raise ScenarioError("length_profile values must be >= 2")


# state-label conventions; distinct wording keeps clusters distinct
def _ok_state(action: str) -> str:
    return f"{action} completed"


def _scary_ok_state(action: str) -> str:
    return f"Error: {action} hit a transient fault (auto-recovered)"


def _affected_state(action: str) -> str:
    return f"{action} veered off-track"


_REPLAN_ACTION = "replan"
_REPLAN_STATE = "plan revised after setback"
_RECOVERY_ACTION = "rework"
_RECOVERY_STATE = "rework attempt rejected"


def _record(agent: str, action: str, state: str) -> str:
    return f"[{agent}] {action} => {state}"


class _Bag:
    """Weighted draws without within-cycle repetition.

    Each refill lays out every combo once, ordered by weighted sampling
    without replacement, so a combo repeats inside one run only after the
    whole pool has been used.  This keeps routine steps from repeating in
    short runs, leaving the deliberately retried error action as the
    dominant repeater.
    """

    def __init__(self, combos: list[tuple[AgentSpec, str]], rng: random.Random) -> None:
        self._combos = combos
        self._rng = rng
        self._queue: list[tuple[AgentSpec, str]] = []

    def draw(self) -> tuple[AgentSpec, str]:
        if not self._queue:
            pool = list(self._combos)
            order: list[tuple[AgentSpec, str]] = []
            while pool:
                total = sum(agent.weight for agent, _ in pool)
                point = self._rng.random() * total
                acc = 0.0
                chosen = len(pool) - 1
                for idx, (agent, _) in enumerate(pool):
                    acc += agent.weight
                    if point < acc:
                        chosen = idx
                        break
                order.append(pool.pop(chosen))
            self._queue = order
        return self._queue.pop(0)


def _routine_pool(scenario: SyntheticScenario) -> list[tuple[AgentSpec, str]]:
    """All (agent, action) combos except the exclusive opening step."""
    opening = (scenario.agents[0].name, scenario.agents[0].actions[0])
    pool = []
    for agent in scenario.agents:
        for action in agent.actions:
            if (agent.name, action) != opening:
                pool.append((agent, action))
    return pool


def _normal_record(scenario: SyntheticScenario, agent: AgentSpec, action: str) -> str:
    scary = scenario.decoy_error_text and agent is scenario.agents[-1] and action == agent.actions[0]
    state = _scary_ok_state(action) if scary else _ok_state(action)
    return _record(agent.name, action, state)


def _recovery_agent(scenario: SyntheticScenario) -> AgentSpec:
    names = [normalize_label(a.name) for a in scenario.agents]
    err_index = names.index(normalize_label(scenario.decisive_error.agent))
    return scenario.agents[(err_index + 1) % len(scenario.agents)]


def generate_run(scenario: SyntheticScenario, run_id: int, force_error: bool | None = None) -> RawLog:
    """Fabricate one run's raw log. Run 0 always takes the error path.

    Fixed draw order per run: length, error flag, error shape (position,
    retries, replan, recovery), then per-step content.  Every run owns an
    independent RNG stream keyed by (seed, run_id).
    """
    rng = random.Random(f"{scenario.seed}:{run_id}")
    length = scenario.length_profile.sample(rng)
    if force_error is None:
        is_error = run_id == 0 or rng.random() < scenario.p_error
    else:
        is_error = run_id == 0 or force_error

    opening_agent = scenario.agents[0]
    pool = _routine_pool(scenario)
    normal_bag = _Bag(pool, rng)
    affected_bag = _Bag(pool, rng)

    if rng.random() < scenario.opening_plan_probability:
        records = [_record(opening_agent.name, opening_agent.actions[0], _ok_state(opening_agent.actions[0]))]
    else:
        agent, action = normal_bag.draw()
        records = [_normal_record(scenario, agent, action)]

    if not is_error:
        while len(records) < length:
            agent, action = normal_bag.draw()
            records.append(_normal_record(scenario, agent, action))
        return RawLog(task_id=scenario.task_id, run_id=run_id, records=tuple(records), outcome=Outcome.SUCCESS)

    error_position = rng.randint(2, max(2, length // 2))
    retries = scenario.retry_profile.sample(rng)
    replan = rng.random() < scenario.replan_probability
    recovery_p = scenario.recovery_tau0_probability if run_id == 0 else scenario.recovery_probability
    recovery = rng.random() < recovery_p
    recovery_repeats = scenario.recovery_profile.sample(rng) if recovery else 0

    while len(records) < error_position - 1:
        agent, action = normal_bag.draw()
        records.append(_normal_record(scenario, agent, action))
    error_record = _record(
        scenario.decisive_error.agent, scenario.decisive_error.action, scenario.decisive_error.error_state
    )
    records.append(error_record)

    tail: list[str] = []
    if replan:
        tail.append(_record(opening_agent.name, _REPLAN_ACTION, _REPLAN_STATE))
    tail.extend([error_record] * (retries - 1))
    fixer = _recovery_agent(scenario)
    tail.extend([_record(fixer.name, _RECOVERY_ACTION, _RECOVERY_STATE)] * recovery_repeats)
    # forced content may extend the run past its drawn length
    while len(records) + len(tail) < length:
        agent, action = affected_bag.draw()
        tail.append(_record(agent.name, action, _affected_state(action)))
    rng.shuffle(tail)
    records.extend(tail)
    return RawLog(task_id=scenario.task_id, run_id=run_id, records=tuple(records), outcome=Outcome.FAILURE)


def generate_synthetic_logs(scenario: SyntheticScenario, k: int, all_failing: bool = False) -> list[RawLog]:
    """Raw logs for the failing run 0 plus k replays."""
    force = True if all_failing else None
    return [generate_run(scenario, 0, force_error=True)] + [
        generate_run(scenario, run_id, force_error=force) for run_id in range(1, k + 1)
    ]


@dataclass
class SyntheticSuite:
    suite: TrajectorySuite
    truth: GroundTruth
    truth_member_steps: tuple[int, ...]  # decisive occurrences in the failing run
    clusters: list[Cluster]
    logs: list[RawLog]

    @property
    def decisive_cluster_id(self) -> int:
        return self._decisive_cluster().cluster_id

    def _decisive_cluster(self) -> Cluster:
        for cluster in self.clusters:
            if cluster.members and cluster.members[0] == (0, self.truth.mistake_step):
                return cluster
        raise AssertionError("decisive cluster missing")


def generate_synthetic_suite(scenario: SyntheticScenario, k: int, all_failing: bool = False) -> SyntheticSuite:
    """Generate raw logs and refine them through the regular pipeline path."""
    logs = generate_synthetic_logs(scenario, k, all_failing=all_failing)
    result: SuiteBuildResult = build_suite(
        logs,
        RulesExtractor(),
        ExactMatchJudge(),
        task=scenario.task or f"task {scenario.task_id}",
    )

    decisive = (
        normalize_label(scenario.decisive_error.agent),
        normalize_label(scenario.decisive_error.action),
        normalize_label(scenario.decisive_error.error_state),
    )
    member_steps: tuple[int, ...] = ()
    for cluster in result.clusters:
        key = (
            cluster.agent.name,
            normalize_label(cluster.representative_action),
            normalize_label(cluster.representative_state),
        )
        if key == decisive:
            member_steps = tuple(step for run, step in cluster.members if run == 0)
            break
    if not member_steps:
        raise AssertionError("decisive error absent from the failing trajectory")

    truth = GroundTruth(
        task_id=scenario.task_id,
        mistake_agent=normalize_label(scenario.decisive_error.agent),
        mistake_step=member_steps[0],
    )
    return SyntheticSuite(
        suite=result.suite,
        truth=truth,
        truth_member_steps=member_steps,
        clusters=result.clusters,
        logs=logs,
    )


def default_scenario(seed: int, task_id: str = "synthetic") -> SyntheticScenario:
    """Canonical benchmark scenario: 4 agents, 8 decoy triples, retry mean 2.

    The weights shape the competitive landscape around the decisive error:
    a near-certain replan step rivals it on coverage statistics, and a
    repeated rework attempt by a quiet agent rivals it on frequency share,
    so the agent- and action-behavior factors carry real signal.
    """
    return SyntheticScenario(
        task_id=task_id,
        agents=(
            AgentSpec("Orchestrator", ("plan", "assign"), weight=0.25),
            AgentSpec("WebSurfer", ("search", "open page"), weight=0.2),
            AgentSpec("Coder", ("write code", "run tests"), weight=0.1),
            AgentSpec("FileSurfer", ("read file", "list files")),
        ),
        decisive_error=DecisiveError("WebSurfer", "search", "results irrelevant to the query"),
        p_error=0.5,
        retry_profile=Distribution.categorical({1: 0.05, 2: 0.90, 3: 0.05}),
        length_profile=Distribution.uniform(10, 16),
        seed=seed,
        task=f"answer the benchmark question for {task_id}",
        opening_plan_probability=0.35,
        replan_probability=0.97,
        recovery_probability=0.85,
        recovery_tau0_probability=0.40,
    )


# ---------------------------------------------------------------------------
# Scenario file I/O
# ---------------------------------------------------------------------------


def scenario_to_dict(scenario: SyntheticScenario) -> dict:
    return {
        "task_id": scenario.task_id,
        "task": scenario.task,
        "agents": [
            {"name": a.name, "actions": list(a.actions), "weight": a.weight} for a in scenario.agents
        ],
        "decisive_error": {
            "agent": scenario.decisive_error.agent,
            "action": scenario.decisive_error.action,
            "error_state": scenario.decisive_error.error_state,
        },
        "p_error": scenario.p_error,
        "opening_plan_probability": scenario.opening_plan_probability,
        "retry_profile": scenario.retry_profile.to_json(),
        "length_profile": scenario.length_profile.to_json(),
        "seed": scenario.seed,
        "replan_probability": scenario.replan_probability,
        "recovery_probability": scenario.recovery_probability,
        "recovery_tau0_probability": scenario.recovery_tau0_probability,
        "recovery_profile": scenario.recovery_profile.to_json(),
        "decoy_error_text": scenario.decoy_error_text,
    }


def scenario_from_dict(document: dict) -> SyntheticScenario:
    defaults = SyntheticScenario.__dataclass_fields__
    return SyntheticScenario(
        task_id=document["task_id"],
        task=document.get("task", ""),
        agents=tuple(
            AgentSpec(a["name"], tuple(a["actions"]), float(a.get("weight", 1.0)))
            for a in document["agents"]
        ),
        decisive_error=DecisiveError(
            agent=document["decisive_error"]["agent"],
            action=document["decisive_error"]["action"],
            error_state=document["decisive_error"]["error_state"],
        ),
        p_error=float(document["p_error"]),
        retry_profile=Distribution.from_json(document["retry_profile"]),
        length_profile=Distribution.from_json(document["length_profile"]),
        seed=int(document["seed"]),
        opening_plan_probability=float(
            document.get("opening_plan_probability", defaults["opening_plan_probability"].default)
        ),
        replan_probability=float(document.get("replan_probability", defaults["replan_probability"].default)),
        recovery_probability=float(
            document.get("recovery_probability", defaults["recovery_probability"].default)
        ),
        recovery_tau0_probability=float(
            document.get("recovery_tau0_probability", defaults["recovery_tau0_probability"].default)
        ),
        recovery_profile=(
            Distribution.from_json(document["recovery_profile"])
            if "recovery_profile" in document
            else Distribution.fixed(2)
        ),
        decoy_error_text=bool(document.get("decoy_error_text", True)),
    )


def load_scenario(path: str | Path) -> SyntheticScenario:
    return scenario_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_scenario(scenario: SyntheticScenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Production replay through a pluggable runner
# ---------------------------------------------------------------------------


class RunnerContract(Protocol):
    """Executes the task once and returns a complete raw log.

    Implementations must return a well-formed RawLog or raise RunnerError;
    they must never emit a partial record stream.  Implementations are
    invoked concurrently when parallelism is configured.
    """

    def run(self, task_id: str, run_id: int, seed: int) -> RawLog: ...


@dataclass
class ReplayDiagnostics:
    requested: int
    collected: int
    dropped: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"requested": self.requested, "collected": self.collected, "dropped": self.dropped}


@dataclass
class ReplayResult:
    task_id: str  # the failing case these replays belong to
    logs: list[RawLog]
    diagnostics: ReplayDiagnostics


MIN_USABLE_REPLAYS = 2  # spectrum analysis needs contrast beyond the failing run


def replay_task(
    task_id: str,
    k: int,
    runner: RunnerContract,
    base_seed: int = 0,
    parallelism: int = 1,
) -> ReplayResult:
    """Collect up to k replay logs; failed runs are dropped with diagnostics."""
    if k < 1:
        raise ValueError("k must be >= 1")

    def one(run_id: int) -> tuple[int, RawLog | None, str | None]:
        seed = base_seed + run_id
        try:
            return run_id, runner.run(task_id, run_id, seed), None
        except RunnerError as exc:
            return run_id, None, str(exc)

    results: list[tuple[int, RawLog | None, str | None]]
    if parallelism > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, range(1, k + 1)))
    else:
        results = [one(run_id) for run_id in range(1, k + 1)]

    logs: list[RawLog] = []
    diagnostics = ReplayDiagnostics(requested=k, collected=0)
    for run_id, log, error in sorted(results):
        if log is None:
            diagnostics.dropped.append({"run_id": run_id, "seed": base_seed + run_id, "error": error})
        else:
            logs.append(log)
    diagnostics.collected = len(logs)
    if len(logs) < MIN_USABLE_REPLAYS:
        raise SuiteInsufficiencyError(
            f"only {len(logs)} of {k} replays usable; spectrum analysis needs at least {MIN_USABLE_REPLAYS}"
        )
    return ReplayResult(task_id=task_id, logs=logs, diagnostics=diagnostics)


class SubprocessRunner:
    """Adapter for an external runner command (FAMAS_RUNNER_CMD).

    Protocol: the command receives {"task_id", "run_id", "seed"} as JSON on
    stdin and must emit JSON Lines on stdout, one {"seq", "content"} object
    per record followed by a final {"outcome": "success"|"failure"} line.
    """

    def __init__(self, command: str, timeout: float = 600.0) -> None:
        if not command:
            raise ValueError("runner command is empty")
        self.command = command
        self.timeout = timeout

    def run(self, task_id: str, run_id: int, seed: int) -> RawLog:
        request = json.dumps({"task_id": task_id, "run_id": run_id, "seed": seed})
        try:
            completed = subprocess.run(
                self.command,
                shell=True,
                input=request.encode("utf-8"),
                capture_output=True,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise RunnerError(f"run {run_id} timed out after {self.timeout}s") from exc
        if completed.returncode != 0:
            raise RunnerError(
                f"run {run_id} exited with status {completed.returncode}: "
                f"{completed.stderr.decode('utf-8', 'replace').strip()[:500]}"
            )
        records: list[tuple[int, str]] = []
        outcome: Outcome | None = None
        for line in completed.stdout.decode("utf-8", "replace").splitlines():
            if not line.strip():
                continue
            try:
                document = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RunnerError(f"run {run_id} emitted a non-JSON line: {line[:200]!r}") from exc
            if "outcome" in document:
                outcome = Outcome.from_label(document["outcome"])
            else:
                records.append((int(document["seq"]), document["content"]))
        if outcome is None:
            raise RunnerError(f"run {run_id} ended without an outcome line")
        if not records:
            raise RunnerError(f"run {run_id} emitted no records")
        ordered = [content for _, content in sorted(records)]
        return RawLog(task_id=task_id, run_id=run_id, records=tuple(ordered), outcome=outcome)
