"""Golden abstraction round trips: rules extractor + exact judge vs frozen files."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from famas.abstraction import RulesExtractor, load_raw_logs
from famas.clustering import ExactMatchJudge, build_suite
from famas.model import suite_to_dict

GOLDEN = Path(__file__).parent / "fixtures" / "golden"

CASES = sorted(d.name for d in GOLDEN.iterdir() if d.is_dir())

# hand-derived reference for case_01: two agents, the repeated bad search
# collapses into one cluster covering failing-run steps 2 and 3
CASE_01_EXPECTED = {
    "version": "1",
    "task_id": "case_01",
    "trajectories": [
        {
            "id": 0,
            "initial_state": "golden case_01",
            "outcome": "failure",
            "steps": [
                {"index": 1, "agent": "planner", "action": "plan", "state": "plan ready", "cluster_id": 0},
                {"index": 2, "agent": "searcher", "action": "search", "state": "wrong page", "cluster_id": 1},
                {"index": 3, "agent": "searcher", "action": "search", "state": "wrong page", "cluster_id": 1},
            ],
        },
        {
            "id": 1,
            "initial_state": "golden case_01",
            "outcome": "success",
            "steps": [
                {"index": 1, "agent": "planner", "action": "plan", "state": "plan ready", "cluster_id": 0},
                {"index": 2, "agent": "searcher", "action": "search", "state": "right page", "cluster_id": 2},
            ],
        },
    ],
}


def rebuild_suite_bytes(case_dir: Path) -> bytes:
    task_id, task, logs = load_raw_logs(case_dir / "logs.jsonl", case_dir / "manifest.json")
    result = build_suite(logs, RulesExtractor(), ExactMatchJudge(), task=task)
    return (json.dumps(suite_to_dict(result.suite), indent=2) + "\n").encode("utf-8")


def test_twenty_cases_present():
    assert len(CASES) == 20


def test_case_01_matches_hand_reference():
    expected = (GOLDEN / "case_01" / "expected_suite.json").read_text()
    assert json.loads(expected) == CASE_01_EXPECTED


@pytest.mark.parametrize("case", CASES)
def test_round_trip_byte_identical(case):
    case_dir = GOLDEN / case
    expected = (case_dir / "expected_suite.json").read_bytes()
    assert rebuild_suite_bytes(case_dir) == expected
