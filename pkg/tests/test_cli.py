"""CLI subcommands and pipeline orchestration, all offline."""

from __future__ import annotations

import filecmp
import json
import sys

import pytest

from famas.cli import main
from famas.config import Config
from famas.model import load_suite, save_suite
from famas.pipeline import PipelineError, PipelineInputs, run_pipeline


@pytest.fixture()
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--k", "6", "--seed", "11", "--out", str(out)]) == 0
    return out


class TestSimulateCommand:
    def test_artifacts(self, sim_dir):
        for name in ("scenario.json", "logs.jsonl", "manifest.json", "truth.json", "suite.json", "clusters.json"):
            assert (sim_dir / name).exists(), name

    def test_truth_fields(self, sim_dir):
        truth = json.loads((sim_dir / "truth.json").read_text())
        assert {"task_id", "mistake_agent", "mistake_step"} <= set(truth)

    def test_all_failing_flag(self, tmp_path):
        out = tmp_path / "af"
        assert main(["simulate", "--k", "5", "--seed", "2", "--all-failing", "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert all(run["outcome"] == "failure" for run in manifest["runs"])


class TestStagedCommands:
    def test_abstract_cluster_analyze_evaluate(self, sim_dir, tmp_path):
        abs_dir = tmp_path / "abs"
        assert main([
            "abstract", "--logs", str(sim_dir / "logs.jsonl"),
            "--manifest", str(sim_dir / "manifest.json"), "--out", str(abs_dir),
        ]) == 0
        primitives = json.loads((abs_dir / "primitives.json").read_text())
        assert primitives["version"] == "1"
        assert len(primitives["runs"]) == 7

        clu_dir = tmp_path / "clu"
        assert main(["cluster", "--primitives", str(abs_dir / "primitives.json"), "--out", str(clu_dir)]) == 0
        # staged path reproduces the simulate-time refined suite byte for byte
        assert (clu_dir / "suite.json").read_bytes() == (sim_dir / "suite.json").read_bytes()
        assert (clu_dir / "clusters.json").read_bytes() == (sim_dir / "clusters.json").read_bytes()

        ana_dir = tmp_path / "ana"
        assert main(["analyze", "--suite", str(clu_dir / "suite.json"), "--out", str(ana_dir)]) == 0
        ranking = json.loads((ana_dir / "ranking.json").read_text())
        assert ranking["mode"] == "famas"
        assert ranking["entries"][0]["rank"] == 1
        assert (ana_dir / "ranking.tsv").read_text().startswith("rank\tcomposite")
        assert (ana_dir / "figures" / "ranking.png").exists()

        ev_dir = tmp_path / "ev"
        assert main([
            "evaluate", "--suite", str(clu_dir / "suite.json"),
            "--truth", str(sim_dir / "truth.json"), "--out", str(ev_dir),
        ]) == 0
        verdict = json.loads((ev_dir / "verdict.json").read_text())
        assert set(verdict) == {"agent_correct", "action_correct", "top1_unique"}

    def test_evaluate_cases_root(self, tmp_path):
        root = tmp_path / "cases"
        for i in range(3):
            out = root / f"case{i}"
            assert main(["simulate", "--k", "6", "--seed", str(30 + i), "--out", str(out)]) == 0
        ev_dir = tmp_path / "agg"
        assert main(["evaluate", "--cases-root", str(root), "--out", str(ev_dir)]) == 0
        accuracy = json.loads((ev_dir / "accuracy.json").read_text())
        assert accuracy["summary"]["total"] == 3
        assert len(accuracy["cases"]) == 3
        assert (ev_dir / "figures" / "accuracy.png").exists()


class TestPipelineCommand:
    def test_scenario_pipeline_with_verdict(self, sim_dir, tmp_path):
        out = tmp_path / "pipe"
        assert main([
            "pipeline", "--scenario", str(sim_dir / "scenario.json"),
            "--k", "6", "--out", str(out),
        ]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["k"] == 6
        assert "verdict" in report
        assert (out / "report.txt").exists()
        assert (out / "figures" / "ranking.png").exists()

    def test_byte_identical_reruns(self, sim_dir, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        for out in (out1, out2):
            assert main([
                "pipeline", "--scenario", str(sim_dir / "scenario.json"),
                "--k", "6", "--out", str(out),
            ]) == 0
        comparison = filecmp.dircmp(out1, out2)
        mismatches = []

        def collect(cmp):
            mismatches.extend(cmp.diff_files)
            mismatches.extend(cmp.left_only)
            mismatches.extend(cmp.right_only)
            for sub in cmp.subdirs.values():
                collect(sub)

        collect(comparison)
        assert mismatches == []

    def test_suite_bypass_path(self, sim_dir, tmp_path):
        out = tmp_path / "bypass"
        assert main([
            "pipeline", "--suite", str(sim_dir / "suite.json"),
            "--mode", "kulczynski2", "--out", str(out),
        ]) == 0
        ranking = json.loads((out / "ranking.json").read_text())
        assert ranking["mode"] == "kulczynski2"
        # no extraction happened on the bypass path
        diagnostics = json.loads((out / "diagnostics.json").read_text())
        assert "extraction" not in diagnostics

    def test_raw_logs_path(self, sim_dir, tmp_path):
        out = tmp_path / "from-logs"
        assert main([
            "pipeline", "--logs", str(sim_dir / "logs.jsonl"),
            "--manifest", str(sim_dir / "manifest.json"),
            "--truth", str(sim_dir / "truth.json"), "--out", str(out),
        ]) == 0
        assert (out / "suite.json").read_bytes() == (sim_dir / "suite.json").read_bytes()

    def test_parameter_error_before_any_work(self, sim_dir, tmp_path):
        out = tmp_path / "bad"
        code = main([
            "pipeline", "--scenario", str(sim_dir / "scenario.json"),
            "--lambda", "0.4", "--out", str(out),
        ])
        assert code == 2
        assert not out.exists()

    def test_input_exclusivity(self, sim_dir, tmp_path):
        code = main([
            "pipeline", "--scenario", str(sim_dir / "scenario.json"),
            "--suite", str(sim_dir / "suite.json"), "--out", str(tmp_path / "x"),
        ])
        assert code == 2

    def test_stage_error_reported(self, tmp_path):
        bad_suite = tmp_path / "suite.json"
        bad_suite.write_text("{\"version\": \"1\", \"task_id\": \"t\", \"trajectories\": []}")
        out = tmp_path / "out"
        code = main(["pipeline", "--suite", str(bad_suite), "--out", str(out)])
        assert code == 1
        error = json.loads((out / "error.json").read_text())
        assert error["stage"] == "collect"


class TestReplayCommand:
    def test_replay_via_env_runner(self, tmp_path, monkeypatch):
        script = tmp_path / "runner.py"
        script.write_text(
            "import json, sys\n"
            "request = json.loads(sys.stdin.read())\n"
            "print(json.dumps({'seq': 1, 'content': f\"[A] act => r{request['run_id']}\"}))\n"
            "print(json.dumps({'outcome': 'success'}))\n"
        )
        monkeypatch.setenv("FAMAS_RUNNER_CMD", f"{sys.executable} {script}")
        out = tmp_path / "replay"
        assert main(["replay", "--task-id", "t7", "--k", "3", "--out", str(out)]) == 0
        manifest = json.loads((out / "replay_manifest.json").read_text())
        assert [run["run_id"] for run in manifest["runs"]] == [1, 2, 3]
        diagnostics = json.loads((out / "replay_diagnostics.json").read_text())
        assert diagnostics["collected"] == 3

    def test_replay_without_runner_is_config_error(self, tmp_path, monkeypatch):
        monkeypatch.delenv("FAMAS_RUNNER_CMD", raising=False)
        assert main(["replay", "--task-id", "t", "--out", str(tmp_path / "x")]) == 2


class TestSweepCommand:
    def test_sweep_outputs(self, tmp_path):
        out = tmp_path / "sweep"
        assert main([
            "sweep", "--what", "both", "--cases", "6", "--k", "6", "--seed", "5",
            "--lambdas", "0.9", "1.0", "--ks", "3", "6", "--resamples", "2", "--out", str(out),
        ]) == 0
        lam_lines = (out / "sweep_lambda.tsv").read_text().splitlines()
        assert lam_lines[0] == "parameter\tagent_correct_count\taction_correct_count"
        assert len(lam_lines) == 3
        k_lines = (out / "sweep_k.tsv").read_text().splitlines()
        assert len(k_lines) == 3
        assert (out / "sweep_k_detail.tsv").exists()
        assert (out / "figures" / "sweep_lambda.png").exists()
        assert (out / "figures" / "sweep_k.png").exists()


class TestRunPipelineApi:
    def test_result_object(self, sim_dir, tmp_path):
        config = Config(k=6, out=str(tmp_path / "api"))
        inputs = PipelineInputs(scenario_path=str(sim_dir / "scenario.json"))
        result = run_pipeline(config, inputs)
        assert result.ranking.mode == "famas"
        assert result.verdict is not None
        assert (result.out_dir / "report.json").exists()

    def test_analyze_error_names_stage(self, tmp_path, star):
        suite_path = tmp_path / "suite.json"
        save_suite(star.suite, suite_path)
        config = Config(lam=1.0, mode="famas-olambda", out=str(tmp_path / "ok"))
        result = run_pipeline(config, PipelineInputs(suite_path=str(suite_path)))
        assert result.ranking.lam == 1.0
        loaded = load_suite(suite_path)
        assert loaded.task_id == "star"
        with pytest.raises(PipelineError) as exc_info:
            bad = Config(lam=0.51, mode="famas", out=str(tmp_path / "bad"))
            empty_suite = tmp_path / "empty.json"
            empty_suite.write_text('{"version": "1", "task_id": "t", "trajectories": []}')
            run_pipeline(bad, PipelineInputs(suite_path=str(empty_suite)))
        assert exc_info.value.stage == "collect"
