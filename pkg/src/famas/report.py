"""Figure rendering and human-readable summaries for report artifacts.

All figures go through the Agg backend and carry no timestamps, so report
directories are byte-reproducible run to run.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluate import AccuracySummary, SweepPoint, Verdict
from .spectrum import Ranking

_DPI = 120


def save_ranking_figure(ranking: Ranking, path: str | Path, top_n: int = 10) -> None:
    """Horizontal bars of the top suspiciousness scores, rank 1 on top."""
    entries = list(ranking.entries[:top_n])
    labels = [f"#{i + 1} {e.triple.agent.name}: {e.triple.action}" for i, e in enumerate(entries)]
    scores = [e.score for e in entries]
    fig, ax = plt.subplots(figsize=(7, 0.5 * max(len(entries), 2) + 1.2))
    positions = range(len(entries))
    colors = ["#c0392b" if i == 0 and ranking.top1_unique else "#5d6d7e" for i in positions]
    ax.barh(positions, scores, color=colors)
    ax.set_yticks(list(positions), labels=labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel(f"suspiciousness ({ranking.mode}, lambda={ranking.lam:g})")
    ax.set_title("candidate triples of the failing trajectory")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_sweep_figure(points: Sequence[SweepPoint], xlabel: str, path: str | Path) -> None:
    """Agent- and action-level correct counts against a swept parameter."""
    xs = [p.parameter for p in points]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(xs, [p.agent_correct for p in points], marker="o", label="agent level")
    ax.plot(xs, [p.action_correct for p in points], marker="s", label="action level")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("correct attributions")
    ax.grid(True, linestyle="--", alpha=0.5)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_accuracy_figure(summary: AccuracySummary, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(4, 3.2))
    ax.bar(["agent", "action"], [summary.agent_level, summary.action_level], color=["#2e86c1", "#239b56"])
    ax.set_ylim(0, 100)
    ax.set_ylabel("accuracy (%)")
    for i, value in enumerate([summary.agent_level, summary.action_level]):
        ax.text(i, value + 1.5, f"{value:.2f}%", ha="center", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def ranking_report_text(ranking: Ranking, verdict: Verdict | None = None, top_n: int = 10) -> str:
    """Plain-text attribution report."""
    lines = [
        "failure attribution report",
        "==========================",
        f"mode: {ranking.mode}    lambda: {ranking.lam:g}    candidates: {len(ranking.entries)}",
        "",
    ]
    top = ranking.top1
    lines.append("attributed step (top-1):")
    lines.append(f"  agent:  {top.triple.agent.name}")
    lines.append(f"  action: {top.triple.action}")
    lines.append(f"  state:  {top.triple.state}")
    lines.append(f"  score:  {top.score:.6g}")
    if not ranking.top1_unique:
        lines.append("  note:   tied at rank 1; attribution is NOT unique")
    if verdict is not None:
        lines.append("")
        lines.append("ground-truth verdict:")
        lines.append(f"  agent correct:  {'yes' if verdict.agent_correct else 'no'}")
        lines.append(f"  action correct: {'yes' if verdict.action_correct else 'no'}")
        lines.append(f"  top-1 unique:   {'yes' if verdict.top1_unique else 'no'}")
    lines.append("")
    lines.append(f"top {min(top_n, len(ranking.entries))} candidates:")
    header = f"{'rank':>4}  {'score':>12}  {'alpha':>8}  {'k2^l':>7}  {'beta':>6}  {'gamma':>6}  triple"
    lines.append(header)
    for rank, entry in enumerate(ranking.entries[:top_n], start=1):
        lines.append(
            f"{rank:>4}  {entry.score:>12.6g}  {entry.alpha:>8.4g}  {entry.kulczynski2_lambda:>7.4g}  "
            f"{entry.beta:>6.4g}  {entry.gamma:>6.4g}  "
            f"{entry.triple.agent.name}: {entry.triple.action} => {entry.triple.state}"
        )
    return "\n".join(lines) + "\n"
