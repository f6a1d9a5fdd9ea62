"""Spectrum analysis over trajectory suites.

Builds per-triple and per-agent coverage/frequency matrices, evaluates the
classic suspiciousness formulas, the agent-behavior metrics (coverage ratio
and frequency proportion), the action-behavior metrics (decay-weighted
covered-run counts and the local repetition enhancement), and produces the
final ranking of the failing trajectory's triples.

Division convention used throughout: any suspiciousness fraction whose
denominator is zero evaluates to 0, which keeps every score finite and
matches common fault-localization tooling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .model import AgentId, Triple, TrajectorySuite

CLASSIC_FORMULAS = ("ochiai", "tarantula", "jaccard", "dstar2", "kulczynski2")

FAMAS_MODES = ("famas", "famas-k", "famas-obeta", "famas-ogamma", "famas-olambda")

RANKING_MODES = FAMAS_MODES + CLASSIC_FORMULAS

DEFAULT_LAMBDA = 0.9
DEFAULT_K = 20

SCORE_REL_TOL = 1e-12


class SpectrumError(Exception):
    """Raised on invalid spectrum inputs (unknown triple, bad parameter)."""


@dataclass(frozen=True)
class BaseCounts:
    """Per-triple outcome-split coverage counts over the suite."""

    n_cf: int  # failing runs containing the triple
    n_uf: int  # failing runs missing the triple
    n_cs: int  # succeeding runs containing the triple
    n_us: int  # succeeding runs missing the triple


@dataclass(frozen=True)
class SpectrumMatrices:
    """Coverage/frequency matrices at triple and agent level, plus outcomes.

    Rows are trajectories in suite order (row 0 = the failing run); triple
    columns ascend by cluster_id, agent columns by agent index.
    """

    coverage_triple: np.ndarray  # (k+1) x m, {0,1}
    freq_triple: np.ndarray  # (k+1) x m, counts
    coverage_agent: np.ndarray  # (k+1) x n, {0,1}
    freq_agent: np.ndarray  # (k+1) x n, counts
    outcomes: np.ndarray  # k+1, success=1 / failure=0
    triple_index: dict[Triple, int]
    agent_index: dict[AgentId, int]
    triples: tuple[Triple, ...]
    agents: tuple[AgentId, ...]

    def column_of(self, triple: Triple) -> int:
        try:
            return self.triple_index[triple]
        except KeyError:
            raise SpectrumError(f"triple {triple.label()} not in suite universe") from None


def build_matrices(suite: TrajectorySuite) -> SpectrumMatrices:
    """Encode the suite as spectrum matrices."""
    triples = tuple(suite.universe)
    agents = tuple(suite.agents)
    triple_index = {t: j for j, t in enumerate(triples)}
    agent_index = {a: j for j, a in enumerate(agents)}
    agent_col = {a.index: j for j, a in enumerate(agents)}

    rows = len(suite.trajectories)
    freq_triple = np.zeros((rows, len(triples)), dtype=np.int64)
    freq_agent = np.zeros((rows, len(agents)), dtype=np.int64)
    outcomes = np.zeros(rows, dtype=np.int64)

    for i, trajectory in enumerate(suite.trajectories):
        outcomes[i] = trajectory.outcome.to_bit()
        for _, triple in trajectory.steps:
            freq_triple[i, triple_index[triple]] += 1
            freq_agent[i, agent_col[triple.agent.index]] += 1

    return SpectrumMatrices(
        coverage_triple=(freq_triple >= 1).astype(np.int64),
        freq_triple=freq_triple,
        coverage_agent=(freq_agent >= 1).astype(np.int64),
        freq_agent=freq_agent,
        outcomes=outcomes,
        triple_index=triple_index,
        agent_index=agent_index,
        triples=triples,
        agents=agents,
    )


def base_counts(matrices: SpectrumMatrices, triple: Triple) -> BaseCounts:
    """Outcome-split coverage counts for one triple."""
    j = matrices.column_of(triple)
    covered = matrices.coverage_triple[:, j] == 1
    failing = matrices.outcomes == 0
    return BaseCounts(
        n_cf=int(np.sum(covered & failing)),
        n_uf=int(np.sum(~covered & failing)),
        n_cs=int(np.sum(covered & ~failing)),
        n_us=int(np.sum(~covered & ~failing)),
    )


def _safe_div(numerator: float, denominator: float) -> float:
    """Zero-denominator fractions evaluate to 0 by convention."""
    if denominator == 0:
        return 0.0
    return numerator / denominator


def _ochiai(c: BaseCounts) -> float:
    return _safe_div(c.n_cf, math.sqrt((c.n_cf + c.n_uf) * (c.n_cf + c.n_cs)))


def _tarantula(c: BaseCounts) -> float:
    fail_frac = _safe_div(c.n_cf, c.n_cf + c.n_uf)
    pass_frac = _safe_div(c.n_cs, c.n_cs + c.n_us)
    return _safe_div(fail_frac, fail_frac + pass_frac)


def _jaccard(c: BaseCounts) -> float:
    return _safe_div(c.n_cf, c.n_cf + c.n_uf + c.n_cs)


def _dstar2(c: BaseCounts) -> float:
    return _safe_div(c.n_cf**2, c.n_cs + c.n_uf)


def _kulczynski2(c: BaseCounts) -> float:
    return 0.5 * (_safe_div(c.n_cf, c.n_cf + c.n_uf) + _safe_div(c.n_cf, c.n_cf + c.n_cs))


_CLASSIC: dict[str, Callable[[BaseCounts], float]] = {
    "ochiai": _ochiai,
    "tarantula": _tarantula,
    "jaccard": _jaccard,
    "dstar2": _dstar2,
    "kulczynski2": _kulczynski2,
}


def classic_suspiciousness(formula: str, counts: BaseCounts) -> float:
    """Evaluate one of the classic formulas on undecayed counts."""
    try:
        return _CLASSIC[formula](counts)
    except KeyError:
        raise SpectrumError(f"unknown formula {formula!r}; expected one of {CLASSIC_FORMULAS}") from None


def _check_lambda(lam: float, allow_one: bool) -> None:
    if allow_one:
        if not 0.5 < lam <= 1.0:
            raise SpectrumError(f"decay factor must be in (0.5, 1], got {lam}")
    else:
        if not 0.5 < lam < 1.0:
            raise SpectrumError(
                f"decay factor must be in (0.5, 1) here, got {lam}; "
                "at 1.0 the repetition enhancement is undefined, use the famas-olambda mode"
            )


def decayed_counts(matrices: SpectrumMatrices, triple: Triple, lam: float) -> tuple[float, float]:
    """Decay-weighted covered-run counts (failing, succeeding).

    Each covering run contributes lam**(f-1) where f is the triple's
    frequency in that run; lam=1 reduces both to the plain counts.
    """
    _check_lambda(lam, allow_one=True)
    j = matrices.column_of(triple)
    n_cf_lam = 0.0
    n_cs_lam = 0.0
    for freq, outcome in zip(matrices.freq_triple[:, j].tolist(), matrices.outcomes.tolist()):
        if freq > 0:
            weight = float(lam) ** (freq - 1)
            if outcome == 0:
                n_cf_lam += weight
            else:
                n_cs_lam += weight
    return n_cf_lam, n_cs_lam


def kulczynski2_lambda(matrices: SpectrumMatrices, triple: Triple, lam: float) -> float:
    """Kulczynski2 with decay-weighted covered counts; n_uf stays undecayed."""
    n_cf_lam, n_cs_lam = decayed_counts(matrices, triple, lam)
    n_uf = base_counts(matrices, triple).n_uf
    return 0.5 * (_safe_div(n_cf_lam, n_cf_lam + n_uf) + _safe_div(n_cf_lam, n_cf_lam + n_cs_lam))


def local_enhancement(matrices: SpectrumMatrices, triple: Triple, lam: float) -> float:
    """Repetition amplifier for the failing run: 1 + log base 1/lam of f_0j."""
    _check_lambda(lam, allow_one=False)
    j = matrices.column_of(triple)
    f0 = int(matrices.freq_triple[0, j])
    if f0 < 1:
        raise SpectrumError(
            f"triple {triple.label()} absent from the failing trajectory; not a candidate"
        )
    return 1.0 + math.log(f0) / math.log(1.0 / lam)


def coverage_ratio(matrices: SpectrumMatrices, triple: Triple) -> float:
    """Fraction of the agent's active trajectories that contain the triple."""
    j = matrices.column_of(triple)
    a = matrices.agent_index[triple.agent]
    nc_triple = int(np.sum(matrices.coverage_triple[:, j]))
    nc_agent = int(np.sum(matrices.coverage_agent[:, a]))
    if nc_agent == 0:
        raise SpectrumError(f"agent {triple.agent.name!r} never active; cannot form coverage ratio")
    return nc_triple / nc_agent


def frequency_proportion(matrices: SpectrumMatrices, triple: Triple) -> float:
    """The triple's share of its agent's total action frequency."""
    j = matrices.column_of(triple)
    a = matrices.agent_index[triple.agent]
    f_triple = int(np.sum(matrices.freq_triple[:, j]))
    f_agent = int(np.sum(matrices.freq_agent[:, a]))
    if f_agent == 0:
        raise SpectrumError(f"agent {triple.agent.name!r} never active; cannot form frequency proportion")
    return f_triple / f_agent


@dataclass(frozen=True)
class ScoreBreakdown:
    """Per-triple metric breakdown plus the composite suspiciousness."""

    triple: Triple
    alpha: float
    kulczynski2_lambda: float
    beta: float
    gamma: float
    classic_scores: dict[str, float]
    composite: float
    score: float  # ranking key of the mode that produced this breakdown


@dataclass(frozen=True)
class Ranking:
    """Failing-trajectory triples ordered by descending suspiciousness."""

    mode: str
    lam: float
    entries: tuple[ScoreBreakdown, ...]
    tie_groups: tuple[tuple[int, ...], ...]  # indices into entries

    @property
    def top1(self) -> ScoreBreakdown:
        return self.entries[0]

    @property
    def top1_unique(self) -> bool:
        return len(self.tie_groups[0]) == 1


def _breakdown(
    matrices: SpectrumMatrices, triple: Triple, lam: float, use_alpha: bool
) -> ScoreBreakdown:
    counts = base_counts(matrices, triple)
    classic = {name: _CLASSIC[name](counts) for name in CLASSIC_FORMULAS}
    k2_lam = kulczynski2_lambda(matrices, triple, lam)
    beta = frequency_proportion(matrices, triple)
    gamma = coverage_ratio(matrices, triple)
    alpha = local_enhancement(matrices, triple, lam) if use_alpha else 1.0
    composite = alpha * k2_lam * (1.0 + beta) * (1.0 + gamma)
    return ScoreBreakdown(
        triple=triple,
        alpha=alpha,
        kulczynski2_lambda=k2_lam,
        beta=beta,
        gamma=gamma,
        classic_scores=classic,
        composite=composite,
        score=composite,
    )


def composite_score(matrices: SpectrumMatrices, triple: Triple, lam: float) -> ScoreBreakdown:
    """Full composite for a failing-trajectory triple: alpha * K2^lam * (1+beta) * (1+gamma)."""
    return _breakdown(matrices, triple, lam, use_alpha=True)


def _mode_score(mode: str, b: ScoreBreakdown) -> float:
    if mode == "famas":
        return b.composite
    if mode == "famas-k":
        return b.classic_scores["kulczynski2"]
    if mode == "famas-obeta":
        return b.alpha * b.kulczynski2_lambda * (1.0 + b.gamma)
    if mode == "famas-ogamma":
        return b.alpha * b.kulczynski2_lambda * (1.0 + b.beta)
    if mode == "famas-olambda":
        return b.kulczynski2_lambda * (1.0 + b.beta) * (1.0 + b.gamma)
    return b.classic_scores[mode]


def _scores_tie(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=SCORE_REL_TOL, abs_tol=0.0)


def rank_triples(suite: TrajectorySuite, lam: float, mode: str) -> Ranking:
    """Rank the failing trajectory's triples under the chosen scoring mode.

    Modes: famas (full composite), famas-k (plain Kulczynski2), famas-obeta
    (composite without the frequency-proportion factor), famas-ogamma
    (composite without the coverage-ratio factor), famas-olambda (decayed
    Kulczynski2 with beta/gamma but no repetition enhancement), and the five
    classic formulas on undecayed counts.
    """
    if mode not in RANKING_MODES:
        raise SpectrumError(f"unknown ranking mode {mode!r}; expected one of {RANKING_MODES}")
    needs_alpha = mode in ("famas", "famas-obeta", "famas-ogamma")
    if needs_alpha:
        _check_lambda(lam, allow_one=False)
    else:
        _check_lambda(lam, allow_one=True)

    matrices = build_matrices(suite)
    candidates = suite.candidates()
    if not candidates:
        raise SpectrumError("no candidate triples: failing trajectory is empty")

    use_alpha = needs_alpha or (mode != "famas-olambda" and lam < 1.0)
    breakdowns = [_breakdown(matrices, t, lam, use_alpha=use_alpha) for t in candidates]

    scored = [
        ScoreBreakdown(
            triple=b.triple,
            alpha=b.alpha,
            kulczynski2_lambda=b.kulczynski2_lambda,
            beta=b.beta,
            gamma=b.gamma,
            classic_scores=b.classic_scores,
            composite=b.composite,
            score=_mode_score(mode, b),
        )
        for b in breakdowns
    ]
    scored.sort(key=lambda b: (-b.score, b.triple.cluster_id))

    tie_groups: list[tuple[int, ...]] = []
    group: list[int] = []
    for i, entry in enumerate(scored):
        if group and _scores_tie(scored[group[0]].score, entry.score):
            group.append(i)
        else:
            if group:
                tie_groups.append(tuple(group))
            group = [i]
    tie_groups.append(tuple(group))

    return Ranking(mode=mode, lam=lam, entries=tuple(scored), tie_groups=tuple(tie_groups))


# ---------------------------------------------------------------------------
# Ranking export
# ---------------------------------------------------------------------------


def ranking_to_dict(ranking: Ranking) -> dict:
    return {
        "mode": ranking.mode,
        "lambda": ranking.lam,
        "entries": [
            {
                "rank": rank,
                "cluster_id": entry.triple.cluster_id,
                "agent": entry.triple.agent.name,
                "action": entry.triple.action,
                "state": entry.triple.state,
                "score": entry.score,
                "alpha": entry.alpha,
                "k2_lambda": entry.kulczynski2_lambda,
                "beta": entry.beta,
                "gamma": entry.gamma,
                "composite": entry.composite,
                "classic": dict(entry.classic_scores),
            }
            for rank, entry in enumerate(ranking.entries, start=1)
        ],
        "top1_unique": ranking.top1_unique,
        "tie_groups": [list(group) for group in ranking.tie_groups],
    }


def save_ranking_json(ranking: Ranking, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ranking_to_dict(ranking), indent=2) + "\n", encoding="utf-8")


def save_ranking_tsv(ranking: Ranking, path: str | Path) -> None:
    """Plot-ready (rank, composite) table, one candidate per line."""
    lines = ["rank\tcomposite"]
    for rank, entry in enumerate(ranking.entries, start=1):
        lines.append(f"{rank}\t{entry.score!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
