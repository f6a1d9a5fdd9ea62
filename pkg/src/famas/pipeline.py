"""End-to-end orchestration: collect, abstract, cluster, analyze, evaluate.

Every run writes a self-contained report directory.  Given identical
inputs, seeds, and deterministic extractor/judge choices, two runs produce
byte-identical files; nothing here records wall-clock time or hostnames.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .abstraction import ExtractorContract, LlmExtractor, RawLog, RulesExtractor, load_raw_logs, save_raw_logs
from .clustering import (
    Cluster,
    ExactMatchJudge,
    JudgeCache,
    LlmJudge,
    SemanticJudgeContract,
    build_suite,
    save_clusters,
)
from .config import Config, ConfigError
from .evaluate import (
    GroundTruth,
    Verdict,
    judge_attribution,
    load_ground_truth,
    save_ground_truth,
    tau0_membership,
)
from .llm import ChatCompletionClient, LlmSettings
from .model import TrajectorySuite, load_suite, save_suite, validate_suite
from .report import ranking_report_text, save_ranking_figure
from .simulate import SyntheticSuite, generate_synthetic_suite, load_scenario, scenario_to_dict
from .spectrum import Ranking, rank_triples, save_ranking_json, save_ranking_tsv


class PipelineError(Exception):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage
        self.reason = message


@dataclass
class PipelineInputs:
    """Exactly one of scenario / logs / suite drives a pipeline run."""

    scenario_path: str | None = None
    logs_path: str | None = None
    manifest_path: str | None = None
    suite_path: str | None = None
    truth_path: str | None = None

    def validate(self) -> None:
        sources = [
            self.scenario_path is not None,
            self.logs_path is not None,
            self.suite_path is not None,
        ]
        if sum(sources) != 1:
            raise ConfigError("exactly one of --scenario, --logs, or --suite is required")
        if self.logs_path is not None and self.manifest_path is None:
            raise ConfigError("--logs requires --manifest")


@dataclass
class PipelineResult:
    suite: TrajectorySuite
    ranking: Ranking
    verdict: Verdict | None
    out_dir: Path


def make_extractor(config: Config) -> ExtractorContract:
    if config.extractor == "rules":
        return RulesExtractor()
    settings = LlmSettings(
        base_url=config.llm_base_url,
        model=config.llm_model,
        endpoint_path=config.llm_endpoint_path,
    )
    return LlmExtractor(ChatCompletionClient(settings=settings))


def make_judge(config: Config, cache_path: Path | None = None) -> SemanticJudgeContract:
    if config.judge == "exact":
        return ExactMatchJudge()
    settings = LlmSettings(
        base_url=config.llm_base_url,
        model=config.llm_model,
        endpoint_path=config.llm_endpoint_path,
    )
    return LlmJudge(ChatCompletionClient(settings=settings), cache=JudgeCache(cache_path))


def _write_json(path: Path, document: dict) -> None:
    path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")


def run_pipeline(config: Config, inputs: PipelineInputs) -> PipelineResult:
    """Execute the full attribution pipeline and write all artifacts."""
    config.validate()
    inputs.validate()
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    figures_dir = out_dir / "figures"
    figures_dir.mkdir(exist_ok=True)

    suite: TrajectorySuite
    clusters: list[Cluster] | None = None
    truth: GroundTruth | None = None
    diagnostics: dict = {"stages": []}

    # collect: synthesize, load raw logs, or load a pre-structured suite
    stage = "collect"
    try:
        logs: list[RawLog] | None = None
        task_text = ""
        if inputs.scenario_path is not None:
            scenario = load_scenario(inputs.scenario_path)
            if config.seed:
                scenario = dataclasses.replace(scenario, seed=config.seed)
            synthetic: SyntheticSuite = generate_synthetic_suite(scenario, config.k)
            logs = synthetic.logs
            truth = synthetic.truth
            _write_json(out_dir / "scenario.json", scenario_to_dict(scenario))
            save_raw_logs(logs, out_dir / "logs.jsonl", out_dir / "manifest.json", task=scenario.task)
            save_ground_truth(truth, out_dir / "truth.json", member_steps=synthetic.truth_member_steps)
            diagnostics["stages"].append({"stage": stage, "source": "scenario", "runs": len(logs)})
        elif inputs.logs_path is not None:
            _, task_text, logs = load_raw_logs(inputs.logs_path, inputs.manifest_path)
            diagnostics["stages"].append({"stage": stage, "source": "logs", "runs": len(logs)})
        else:
            suite = load_suite(inputs.suite_path)
            diagnostics["stages"].append({"stage": stage, "source": "suite", "runs": len(suite.trajectories)})
        if truth is None and inputs.truth_path is not None:
            truth = load_ground_truth(inputs.truth_path)
    except (OSError, ValueError, KeyError) as exc:
        raise PipelineError(stage, str(exc)) from exc

    # abstract + cluster raw logs into a refined suite
    if logs is not None:
        stage = "abstract-cluster"
        try:
            extractor = make_extractor(config)
            judge = make_judge(config, cache_path=out_dir / "judge_cache.json")
            built = build_suite(logs, extractor, judge, char_budget=config.char_budget, task=task_text)
            suite = built.suite
            clusters = built.clusters
            if isinstance(judge, LlmJudge):
                judge.cache.save()
            diagnostics["extraction"] = [d.to_dict() for d in built.diagnostics]
        except Exception as exc:
            raise PipelineError(stage, str(exc)) from exc

    stage = "validate"
    violations = validate_suite(suite)
    if violations:
        raise PipelineError(stage, "; ".join(str(v) for v in violations))
    save_suite(suite, out_dir / "suite.json")
    if clusters is not None:
        save_clusters(clusters, out_dir / "clusters.json")

    stage = "analyze"
    try:
        ranking = rank_triples(suite, config.lam, config.mode)
    except Exception as exc:
        raise PipelineError(stage, str(exc)) from exc
    save_ranking_json(ranking, out_dir / "ranking.json")
    save_ranking_tsv(ranking, out_dir / "ranking.tsv")
    save_ranking_figure(ranking, figures_dir / "ranking.png")

    verdict: Verdict | None = None
    if truth is not None:
        stage = "evaluate"
        try:
            verdict = judge_attribution(ranking, tau0_membership(suite), truth)
        except Exception as exc:
            raise PipelineError(stage, str(exc)) from exc

    stage = "report"
    top = ranking.top1
    report = {
        "task_id": suite.task_id,
        "mode": ranking.mode,
        "lambda": ranking.lam,
        "k": len(suite.trajectories) - 1,
        "candidates": len(ranking.entries),
        "top1": {
            "cluster_id": top.triple.cluster_id,
            "agent": top.triple.agent.name,
            "action": top.triple.action,
            "state": top.triple.state,
            "score": top.score,
        },
        "top1_unique": ranking.top1_unique,
    }
    if verdict is not None:
        report["verdict"] = verdict.to_dict()
    _write_json(out_dir / "report.json", report)
    (out_dir / "report.txt").write_text(ranking_report_text(ranking, verdict), encoding="utf-8")
    _write_json(out_dir / "diagnostics.json", diagnostics)

    return PipelineResult(suite=suite, ranking=ranking, verdict=verdict, out_dir=out_dir)
