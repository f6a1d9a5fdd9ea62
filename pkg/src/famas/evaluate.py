"""Attribution judging, accuracy aggregation, and parameter sweeps.

Correctness follows the strict top-1 rule: an attribution counts only when
the ground-truth triple is ranked first with no ties.  Agent-level
correctness compares normalized agent names; action-level correctness asks
whether the annotated failing-run step belongs to the top-ranked cluster's
member steps in the failing run, so a correct action always implies the
correct agent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .model import TrajectorySuite, normalize_label
from .spectrum import Ranking, rank_triples


class AnnotationError(Exception):
    """Ground-truth annotation inconsistent with the trajectory it describes."""


@dataclass(frozen=True)
class GroundTruth:
    """Expert annotation of one failure: responsible agent and failing-run step."""

    task_id: str
    mistake_agent: str
    mistake_step: int  # 1-based step index into the failing trajectory

    def __post_init__(self) -> None:
        object.__setattr__(self, "mistake_agent", normalize_label(self.mistake_agent))
        if self.mistake_step < 1:
            raise AnnotationError(f"mistake_step must be >= 1, got {self.mistake_step}")


@dataclass(frozen=True)
class Verdict:
    agent_correct: bool
    action_correct: bool
    top1_unique: bool

    def to_dict(self) -> dict:
        return {
            "agent_correct": self.agent_correct,
            "action_correct": self.action_correct,
            "top1_unique": self.top1_unique,
        }


def tau0_membership(suite: TrajectorySuite) -> dict[int, tuple[int, ...]]:
    """Map cluster_id to the failing run's 1-based step indices for it."""
    members: dict[int, list[int]] = {}
    for step_index, triple in suite.failing.steps:
        members.setdefault(triple.cluster_id, []).append(step_index)
    return {cid: tuple(steps) for cid, steps in members.items()}


def judge_attribution(
    ranking: Ranking,
    tau0_members: Mapping[int, Sequence[int]],
    truth: GroundTruth,
) -> Verdict:
    """Score one attribution under the strict top-1 rule."""
    if not ranking.entries:
        raise ValueError("ranking is empty")
    last_step = max((step for steps in tau0_members.values() for step in steps), default=0)
    if truth.mistake_step > last_step:
        raise AnnotationError(
            f"mistake_step {truth.mistake_step} exceeds the failing trajectory length {last_step}"
        )
    if not ranking.top1_unique:
        return Verdict(agent_correct=False, action_correct=False, top1_unique=False)

    top = ranking.top1.triple
    agent_correct = top.agent.name == truth.mistake_agent
    member_steps = tau0_members.get(top.cluster_id, ())
    action_correct = agent_correct and truth.mistake_step in member_steps
    return Verdict(agent_correct=agent_correct, action_correct=action_correct, top1_unique=True)


@dataclass(frozen=True)
class AccuracySummary:
    total: int
    agent_correct: int
    action_correct: int

    @property
    def agent_level(self) -> float:
        return 100.0 * self.agent_correct / self.total

    @property
    def action_level(self) -> float:
        return 100.0 * self.action_correct / self.total

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "agent_correct": self.agent_correct,
            "action_correct": self.action_correct,
            "agent_level_pct": self.agent_level,
            "action_level_pct": self.action_level,
        }


def aggregate_accuracy(verdicts: Sequence[Verdict]) -> AccuracySummary:
    """Percentage accuracy at both levels, with the raw counts."""
    if not verdicts:
        raise ValueError("no verdicts to aggregate")
    return AccuracySummary(
        total=len(verdicts),
        agent_correct=sum(1 for v in verdicts if v.agent_correct),
        action_correct=sum(1 for v in verdicts if v.action_correct),
    )


def evaluate_case(suite: TrajectorySuite, truth: GroundTruth, lam: float, mode: str) -> Verdict:
    """Rank the suite and judge it against its annotation."""
    ranking = rank_triples(suite, lam, mode)
    return judge_attribution(ranking, tau0_membership(suite), truth)


# ---------------------------------------------------------------------------
# Parameter sweeps over a prepared corpus of (suite, truth) cases
# ---------------------------------------------------------------------------

Corpus = Sequence[tuple[TrajectorySuite, GroundTruth]]


@dataclass(frozen=True)
class SweepPoint:
    parameter: float
    agent_correct: int
    action_correct: int


def corpus_counts(corpus: Corpus, lam: float, mode: str) -> tuple[int, int]:
    verdicts = [evaluate_case(suite, truth, lam, mode) for suite, truth in corpus]
    summary = aggregate_accuracy(verdicts)
    return summary.agent_correct, summary.action_correct


def lambda_sweep(corpus: Corpus, lambdas: Sequence[float]) -> list[SweepPoint]:
    """Correct-attribution counts per decay factor.

    Decay factors below 1 run the full composite; at exactly 1 the
    repetition enhancement is undefined, so that point runs the
    no-enhancement variant, which is the meaningful λ=1 limit.
    """
    points = []
    for lam in lambdas:
        mode = "famas" if lam < 1.0 else "famas-olambda"
        agent_c, action_c = corpus_counts(corpus, lam, mode)
        points.append(SweepPoint(parameter=lam, agent_correct=agent_c, action_correct=action_c))
    return points


def subsample_suite(suite: TrajectorySuite, k: int, rng_sample: Sequence[int]) -> TrajectorySuite:
    """Keep the failing run plus the k replays selected by index (1-based)."""
    chosen = [suite.trajectories[0]] + [suite.trajectories[i] for i in rng_sample]
    return TrajectorySuite.build(chosen, task_id=suite.task_id)


def k_sweep(
    corpus: Corpus,
    ks: Sequence[int],
    lam: float,
    mode: str,
    resamples: int = 5,
    seed: int = 0,
) -> list[tuple[int, list[SweepPoint]]]:
    """Counts at reduced replay budgets, resampled from the full suites.

    For each k below the full budget, the replays of every suite are
    subsampled without replacement `resamples` times; the full budget is a
    single deterministic point (nothing to resample).
    """
    import random

    results: list[tuple[int, list[SweepPoint]]] = []
    for k in ks:
        points: list[SweepPoint] = []
        full = all(suite.k <= k for suite, _ in corpus)
        rounds = 1 if full else resamples
        for round_index in range(rounds):
            rng = random.Random(f"{seed}:{k}:{round_index}")
            agent_c = action_c = 0
            for suite, truth in corpus:
                if suite.k <= k:
                    sampled = suite
                else:
                    picks = sorted(rng.sample(range(1, suite.k + 1), k))
                    sampled = subsample_suite(suite, k, picks)
                verdict = evaluate_case(sampled, truth, lam, mode)
                agent_c += verdict.agent_correct
                action_c += verdict.action_correct
            points.append(SweepPoint(parameter=float(k), agent_correct=agent_c, action_correct=action_c))
        results.append((k, points))
    return results


def sweep_points_to_tsv(points: Sequence[SweepPoint], path: str | Path) -> None:
    lines = ["parameter\tagent_correct_count\taction_correct_count"]
    for point in points:
        parameter = f"{point.parameter:g}"
        lines.append(f"{parameter}\t{point.agent_correct}\t{point.action_correct}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Ground-truth files
# ---------------------------------------------------------------------------

_AGENT_KEYS = ("mistake_agent", "agent", "who")
_STEP_KEYS = ("mistake_step", "step", "when")


def ground_truth_from_dict(document: dict) -> GroundTruth:
    """Load an annotation, tolerating benchmark-style field spellings."""
    agent = next((document[key] for key in _AGENT_KEYS if key in document), None)
    step = next((document[key] for key in _STEP_KEYS if key in document), None)
    if agent is None or step is None:
        raise AnnotationError(f"annotation missing agent/step fields: {sorted(document)}")
    return GroundTruth(
        task_id=str(document.get("task_id", "")),
        mistake_agent=str(agent),
        mistake_step=int(step),
    )


def load_ground_truth(path: str | Path) -> GroundTruth:
    return ground_truth_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_ground_truth(truth: GroundTruth, path: str | Path, member_steps: Sequence[int] = (), action: str = "") -> None:
    document = {
        "task_id": truth.task_id,
        "mistake_agent": truth.mistake_agent,
        "mistake_step": truth.mistake_step,
    }
    if action:
        document["mistake_action"] = action
    if member_steps:
        document["member_steps"] = list(member_steps)
    Path(path).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class StepAlignment:
    """Raw-record to abstract-step map for one run, from extraction output.

    Annotations reference raw log records; abstraction may skip malformed
    records, shifting indices.  Ambiguous steps (annotated records that were
    skipped) are flagged rather than guessed.
    """

    raw_to_abstract: tuple[tuple[int, int], ...]

    def abstract_step(self, raw_step: int) -> int | None:
        mapping = dict(self.raw_to_abstract)
        return mapping.get(raw_step)

    def is_ambiguous(self, raw_step: int) -> bool:
        return self.abstract_step(raw_step) is None


def align_annotation(truth: GroundTruth, alignment: StepAlignment) -> tuple[GroundTruth, bool]:
    """Translate a raw-step annotation into abstract steps; flag ambiguity."""
    mapped = alignment.abstract_step(truth.mistake_step)
    if mapped is None:
        return truth, True
    return GroundTruth(truth.task_id, truth.mistake_agent, mapped), False


def alignment_from_rules(log) -> StepAlignment:
    """Raw-record to abstract-step map under the rules extractor.

    LLM extraction cannot attribute emitted rows to individual records, so
    this map exists only for the deterministic rules path; annotated steps
    that land on skipped records come back as ambiguous.
    """
    from .abstraction import RulesExtractor

    pairs: list[tuple[int, int]] = []
    step = 0
    for seq, record in enumerate(log.records, start=1):
        if RulesExtractor.matches(record):
            step += 1
            pairs.append((seq, step))
    return StepAlignment(raw_to_abstract=tuple(pairs))
