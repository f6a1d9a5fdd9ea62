"""Command-line interface.

Subcommands: simulate, replay, abstract, cluster, analyze, evaluate,
pipeline, sweep.  Every knob follows CLI > environment (FAMAS_*) > config
file precedence; see famas.config.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .abstraction import extract_primitives, load_raw_logs, save_raw_logs
from .clustering import PrimitiveRun, refine_trajectories, save_clusters
from .config import Config, ConfigError, resolve_config
from .evaluate import (
    aggregate_accuracy,
    judge_attribution,
    k_sweep,
    lambda_sweep,
    load_ground_truth,
    save_ground_truth,
    sweep_points_to_tsv,
    tau0_membership,
    SweepPoint,
)
from .model import Outcome, load_suite, save_suite
from .pipeline import PipelineError, PipelineInputs, make_extractor, make_judge, run_pipeline
from .report import ranking_report_text, save_accuracy_figure, save_ranking_figure, save_sweep_figure
from .simulate import (
    SubprocessRunner,
    default_scenario,
    generate_synthetic_suite,
    load_scenario,
    replay_task,
    save_scenario,
)
from .spectrum import rank_triples, save_ranking_json, save_ranking_tsv


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (lowest precedence)")
    parser.add_argument("--k", type=int, default=None, help="number of replayed trajectories (default 20)")
    parser.add_argument("--lambda", dest="lam", type=float, default=None, help="decay factor (default 0.9)")
    parser.add_argument(
        "--mode",
        default=None,
        choices=[
            "famas",
            "famas-k",
            "famas-obeta",
            "famas-ogamma",
            "famas-olambda",
            "ochiai",
            "tarantula",
            "jaccard",
            "dstar2",
            "kulczynski2",
        ],
        help="suspiciousness scoring mode (default famas)",
    )
    parser.add_argument("--seed", type=int, default=None, help="base random seed")
    parser.add_argument("--extractor", default=None, choices=["rules", "llm"], help="log extractor")
    parser.add_argument("--judge", default=None, choices=["exact", "llm"], help="semantic judge")
    parser.add_argument("--out", default=None, help="output directory (default ./out)")
    parser.add_argument("--char-budget", dest="char_budget", type=int, default=None, help="chunk budget")
    parser.add_argument("--parallelism", type=int, default=None, help="concurrent replay runs")


def _config_from(args: argparse.Namespace) -> Config:
    cli_values = {
        name: getattr(args, name, None)
        for name in (
            "k",
            "lam",
            "mode",
            "seed",
            "extractor",
            "judge",
            "out",
            "char_budget",
            "parallelism",
        )
    }
    if getattr(args, "runner_cmd", None) is not None:
        cli_values["runner_cmd"] = args.runner_cmd
    return resolve_config(cli_values, config_file=getattr(args, "config", None))


def _out_dir(config: Config) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, document: dict) -> None:
    path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _config_from(args)
    out = _out_dir(config)
    if args.scenario:
        scenario = load_scenario(args.scenario)
        if config.seed:
            import dataclasses

            scenario = dataclasses.replace(scenario, seed=config.seed)
    else:
        scenario = default_scenario(seed=config.seed or 1, task_id="synthetic")
    synthetic = generate_synthetic_suite(scenario, config.k, all_failing=args.all_failing)
    save_scenario(scenario, out / "scenario.json")
    save_raw_logs(synthetic.logs, out / "logs.jsonl", out / "manifest.json", task=scenario.task)
    save_ground_truth(
        synthetic.truth,
        out / "truth.json",
        member_steps=synthetic.truth_member_steps,
        action=scenario.decisive_error.action,
    )
    save_suite(synthetic.suite, out / "suite.json")
    save_clusters(synthetic.clusters, out / "clusters.json")
    print(f"simulated {len(synthetic.logs)} runs -> {out}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    config = _config_from(args)
    out = _out_dir(config)
    command = config.runner_cmd
    if not command:
        raise ConfigError("no runner command; set FAMAS_RUNNER_CMD or --runner-cmd")
    runner = SubprocessRunner(command)
    result = replay_task(args.task_id, config.k, runner, base_seed=config.seed, parallelism=config.parallelism)
    save_raw_logs(result.logs, out / "replays.jsonl", out / "replay_manifest.json")
    _write_json(out / "replay_diagnostics.json", result.diagnostics.to_dict())
    print(f"collected {len(result.logs)} of {config.k} replays -> {out}")
    return 0


def cmd_abstract(args: argparse.Namespace) -> int:
    config = _config_from(args)
    out = _out_dir(config)
    task_id, task_text, logs = load_raw_logs(args.logs, args.manifest)
    extractor = make_extractor(config)
    runs = []
    diagnostics = []
    for log in logs:
        result = extract_primitives(log, extractor, char_budget=config.char_budget)
        diagnostics.append(result.diagnostics.to_dict())
        runs.append(
            {
                "run_id": log.run_id,
                "outcome": log.outcome.value,
                "primitives": [
                    {"step": p.source_step, "agent": p.agent_name, "action": p.action_desc, "state": p.state_desc}
                    for p in result.primitives
                ],
            }
        )
    _write_json(
        out / "primitives.json",
        {"version": "1", "task_id": task_id, "task": task_text, "runs": runs, "diagnostics": diagnostics},
    )
    print(f"extracted primitives for {len(runs)} runs -> {out / 'primitives.json'}")
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    from .abstraction import PrimitiveTriple

    config = _config_from(args)
    out = _out_dir(config)
    document = json.loads(Path(args.primitives).read_text(encoding="utf-8"))
    task_text = document.get("task", "") or f"task {document.get('task_id', '')}"
    runs = []
    all_primitives = []
    for run in document["runs"]:
        primitives = tuple(
            PrimitiveTriple(
                agent_name=p["agent"],
                action_desc=p["action"],
                state_desc=p["state"],
                source_run=int(run["run_id"]),
                source_step=int(p["step"]),
            )
            for p in run["primitives"]
        )
        all_primitives.extend(primitives)
        runs.append(
            PrimitiveRun(
                run_id=int(run["run_id"]),
                initial_state=task_text,
                outcome=Outcome.from_label(run["outcome"]),
                primitives=primitives,
            )
        )
    judge = make_judge(config, cache_path=out / "judge_cache.json")
    from .clustering import LlmJudge, build_clusters

    clusters = build_clusters(all_primitives, judge)
    if isinstance(judge, LlmJudge):
        judge.cache.save()
    trajectories = refine_trajectories(runs, clusters)
    from .model import TrajectorySuite

    suite = TrajectorySuite.build(trajectories, task_id=document.get("task_id", ""))
    save_suite(suite, out / "suite.json")
    save_clusters(clusters, out / "clusters.json")
    print(f"clustered {len(all_primitives)} primitives into {len(clusters)} clusters -> {out}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _config_from(args)
    out = _out_dir(config)
    suite = load_suite(args.suite)
    ranking = rank_triples(suite, config.lam, config.mode)
    save_ranking_json(ranking, out / "ranking.json")
    save_ranking_tsv(ranking, out / "ranking.tsv")
    figures = out / "figures"
    figures.mkdir(exist_ok=True)
    save_ranking_figure(ranking, figures / "ranking.png")
    (out / "report.txt").write_text(ranking_report_text(ranking), encoding="utf-8")
    top = ranking.top1.triple
    print(f"top-1: {top.agent.name}: {top.action} => {top.state} (unique={ranking.top1_unique})")
    return 0


def _judge_one_case(case_dir: Path, config: Config):
    suite = load_suite(case_dir / "suite.json")
    truth = load_ground_truth(case_dir / "truth.json")
    ranking_path = case_dir / "ranking.json"
    if ranking_path.exists():
        document = json.loads(ranking_path.read_text(encoding="utf-8"))
        mode, lam = document["mode"], float(document["lambda"])
    else:
        mode, lam = config.mode, config.lam
    ranking = rank_triples(suite, lam, mode)
    return judge_attribution(ranking, tau0_membership(suite), truth)


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _config_from(args)
    out = _out_dir(config)
    if args.cases_root:
        root = Path(args.cases_root)
        case_dirs = sorted(d for d in root.iterdir() if d.is_dir() and (d / "suite.json").exists())
        if not case_dirs:
            raise ConfigError(f"no case directories under {root}")
        verdicts = []
        per_case = []
        for case_dir in case_dirs:
            verdict = _judge_one_case(case_dir, config)
            verdicts.append(verdict)
            per_case.append({"case": case_dir.name, **verdict.to_dict()})
        summary = aggregate_accuracy(verdicts)
        _write_json(out / "accuracy.json", {"summary": summary.to_dict(), "cases": per_case})
        figures = out / "figures"
        figures.mkdir(exist_ok=True)
        save_accuracy_figure(summary, figures / "accuracy.png")
        print(
            f"{summary.total} cases: agent {summary.agent_level:.2f}% "
            f"({summary.agent_correct}), action {summary.action_level:.2f}% ({summary.action_correct})"
        )
        return 0

    suite = load_suite(args.suite)
    truth = load_ground_truth(args.truth)
    ranking = rank_triples(suite, config.lam, config.mode)
    verdict = judge_attribution(ranking, tau0_membership(suite), truth)
    _write_json(out / "verdict.json", verdict.to_dict())
    print(
        f"agent_correct={verdict.agent_correct} action_correct={verdict.action_correct} "
        f"top1_unique={verdict.top1_unique}"
    )
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    config = _config_from(args)
    inputs = PipelineInputs(
        scenario_path=args.scenario,
        logs_path=args.logs,
        manifest_path=args.manifest,
        suite_path=args.suite,
        truth_path=args.truth,
    )
    result = run_pipeline(config, inputs)
    top = result.ranking.top1.triple
    print(f"top-1: {top.agent.name}: {top.action} => {top.state} (unique={result.ranking.top1_unique})")
    if result.verdict is not None:
        print(
            f"verdict: agent={'ok' if result.verdict.agent_correct else 'MISS'} "
            f"action={'ok' if result.verdict.action_correct else 'MISS'}"
        )
    print(f"artifacts -> {result.out_dir}")
    return 0


def _build_sweep_corpus(config: Config, cases: int, scenario_path: str | None, k: int):
    corpus = []
    for index in range(cases):
        seed = (config.seed or 1) + index
        if scenario_path:
            import dataclasses

            scenario = dataclasses.replace(load_scenario(scenario_path), seed=seed)
        else:
            scenario = default_scenario(seed=seed, task_id=f"case{index}")
        synthetic = generate_synthetic_suite(scenario, k)
        corpus.append((synthetic.suite, synthetic.truth))
    return corpus


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _config_from(args)
    out = _out_dir(config)
    figures = out / "figures"
    figures.mkdir(exist_ok=True)
    corpus = _build_sweep_corpus(config, args.cases, args.scenario, config.k)

    if args.what in ("lambda", "both"):
        lambdas = args.lambdas or [0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.0]
        points = lambda_sweep(corpus, lambdas)
        sweep_points_to_tsv(points, out / "sweep_lambda.tsv")
        save_sweep_figure(points, "decay factor", figures / "sweep_lambda.png")
        print(f"lambda sweep over {len(corpus)} cases -> {out / 'sweep_lambda.tsv'}")

    if args.what in ("k", "both"):
        ks = args.ks or [5, 10, 15, 20]
        results = k_sweep(corpus, ks, config.lam, config.mode, resamples=args.resamples, seed=config.seed)
        mean_points = []
        detail_lines = ["k\tresample\tagent_correct_count\taction_correct_count"]
        for k, points in results:
            for index, point in enumerate(points):
                detail_lines.append(f"{k}\t{index}\t{point.agent_correct}\t{point.action_correct}")
            mean_points.append(
                SweepPoint(
                    parameter=float(k),
                    agent_correct=round(sum(p.agent_correct for p in points) / len(points)),
                    action_correct=round(sum(p.action_correct for p in points) / len(points)),
                )
            )
        sweep_points_to_tsv(mean_points, out / "sweep_k.tsv")
        (out / "sweep_k_detail.tsv").write_text("\n".join(detail_lines) + "\n", encoding="utf-8")
        save_sweep_figure(mean_points, "number of replayed trajectories", figures / "sweep_k.png")
        print(f"k sweep over {len(corpus)} cases -> {out / 'sweep_k.tsv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="famas",
        description="Spectrum-based failure attribution for multi-agent system execution logs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic log suite with ground truth")
    p.add_argument("--scenario", help="scenario JSON (default: built-in benchmark scenario)")
    p.add_argument("--all-failing", action="store_true", help="force every replay onto the error path")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="collect replay logs through the configured runner")
    p.add_argument("--task-id", required=True)
    p.add_argument("--runner-cmd", default=None, help="runner command (overrides FAMAS_RUNNER_CMD)")
    _add_common(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("abstract", help="extract primitive triples from raw logs")
    p.add_argument("--logs", required=True, help="raw log JSONL")
    p.add_argument("--manifest", required=True, help="run manifest JSON")
    _add_common(p)
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("cluster", help="cluster primitives and emit the refined suite")
    p.add_argument("--primitives", required=True, help="primitives JSON from the abstract step")
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("analyze", help="rank a refined suite's failing-run triples")
    p.add_argument("--suite", required=True, help="refined suite JSON")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evaluate", help="judge attribution against ground truth")
    p.add_argument("--suite", help="refined suite JSON (single case)")
    p.add_argument("--truth", help="ground truth JSON (single case)")
    p.add_argument("--cases-root", help="directory of case subdirectories to aggregate")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="run the whole pipeline end to end")
    p.add_argument("--scenario", help="synthetic scenario JSON")
    p.add_argument("--logs", help="raw log JSONL")
    p.add_argument("--manifest", help="run manifest JSON (with --logs)")
    p.add_argument("--suite", help="pre-structured refined suite JSON (bypasses extraction)")
    p.add_argument("--truth", help="ground truth JSON")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("sweep", help="parameter sweeps on a synthetic corpus")
    p.add_argument("--what", choices=["lambda", "k", "both"], default="both")
    p.add_argument("--cases", type=int, default=50, help="number of synthetic cases")
    p.add_argument("--scenario", help="scenario JSON template (default: built-in)")
    p.add_argument("--lambdas", type=float, nargs="*", help="decay factors for the lambda sweep")
    p.add_argument("--ks", type=int, nargs="*", help="replay budgets for the k sweep")
    p.add_argument("--resamples", type=int, default=5, help="resamples per reduced k")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        out = getattr(args, "out", None)
        if out:
            try:
                Path(out).mkdir(parents=True, exist_ok=True)
                Path(out, "error.json").write_text(
                    json.dumps({"stage": exc.stage, "error": exc.reason}, indent=2) + "\n",
                    encoding="utf-8",
                )
            except OSError:
                pass
        return 1


if __name__ == "__main__":
    sys.exit(main())
