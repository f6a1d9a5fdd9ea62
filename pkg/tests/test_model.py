"""Trajectory model: invariants, universe construction, suite validation, file I/O."""

from __future__ import annotations

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from famas.model import (
    AgentId,
    Outcome,
    SuiteViolation,
    Trajectory,
    TrajectorySuite,
    Triple,
    build_universe,
    load_suite,
    normalize_label,
    save_suite,
    suite_from_dict,
    suite_to_dict,
    validate_suite,
)
from oracle import random_suite


def make_triple(cluster_id: int, agent: AgentId | None = None) -> Triple:
    agent = agent or AgentId(name="a", index=0)
    return Triple(agent=agent, action=f"act{cluster_id}", state=f"s{cluster_id}", cluster_id=cluster_id)


class TestLabels:
    def test_normalize_trims_and_casefolds(self):
        assert normalize_label("  WebSurfer ") == "websurfer"
        assert normalize_label("Web  Surfer") == "web surfer"

    def test_agent_name_empty_after_normalization_rejected(self):
        with pytest.raises(ValueError):
            AgentId(name="   ", index=0)

    def test_triple_labels_non_empty(self):
        agent = AgentId(name="a", index=0)
        with pytest.raises(ValueError):
            Triple(agent=agent, action="", state="s", cluster_id=0)
        with pytest.raises(ValueError):
            Triple(agent=agent, action="act", state="", cluster_id=0)


class TestOutcome:
    def test_encoding(self):
        assert Outcome.SUCCESS.to_bit() == 1
        assert Outcome.FAILURE.to_bit() == 0

    @pytest.mark.parametrize("bit", [0, 1])
    def test_round_trip(self, bit):
        assert Outcome.from_bit(bit).to_bit() == bit

    def test_bad_bit(self):
        with pytest.raises(ValueError):
            Outcome.from_bit(2)


class TestTripleEquality:
    def test_equality_is_by_cluster_id(self):
        a = AgentId(name="a", index=0)
        b = AgentId(name="b", index=1)
        assert Triple(a, "x", "s", 3) == Triple(b, "y", "t", 3)
        assert Triple(a, "x", "s", 3) != Triple(a, "x", "s", 4)

    def test_hash_follows_equality(self):
        a = AgentId(name="a", index=0)
        assert len({Triple(a, "x", "s", 1), Triple(a, "y", "t", 1)}) == 1


class TestBuildUniverse:
    def test_dedups_repeats(self):
        t1, t3 = make_triple(1), make_triple(3)
        traj = Trajectory(0, "s0", ((1, t1), (2, t1), (3, t3)), Outcome.FAILURE)
        assert build_universe([traj]) == [t1, t3]

    def test_empty_input(self):
        assert build_universe([]) == []

    def test_star_universe(self, star):
        assert list(star.suite.universe) == [star.eta3, star.eta1, star.eta2]

    def test_order_insensitive(self):
        rng = random.Random(5)
        for _ in range(25):
            suite = random_suite(rng)
            shuffled = list(suite.trajectories)
            rng.shuffle(shuffled)
            assert build_universe(shuffled) == list(suite.universe)
            assert build_universe(suite.trajectories) == list(suite.universe)

    @given(st.lists(st.lists(st.integers(min_value=0, max_value=9), min_size=1, max_size=8), min_size=1, max_size=5))
    def test_size_bounded_by_total_steps(self, step_ids):
        agent = AgentId(name="a", index=0)
        trajectories = []
        for i, ids in enumerate(step_ids):
            steps = tuple((pos, make_triple(cid, agent)) for pos, cid in enumerate(ids, start=1))
            trajectories.append(Trajectory(i, "s0", steps, Outcome.FAILURE))
        universe = build_universe(trajectories)
        total = sum(len(ids) for ids in step_ids)
        assert len(universe) <= total
        no_repeat = len({cid for ids in step_ids for cid in ids}) == total
        assert (len(universe) == total) == no_repeat


class TestSuite:
    def test_build_rejects_empty_trajectory(self):
        with pytest.raises(ValueError, match="no steps"):
            TrajectorySuite.build([Trajectory(0, "s0", (), Outcome.FAILURE)])

    def test_root_not_failing_is_a_violation(self, star):
        t = make_triple(0)
        traj = Trajectory(0, "s0", ((1, t),), Outcome.SUCCESS)
        suite = TrajectorySuite.build([traj])
        violations = validate_suite(suite)
        assert [v for v in violations if "root trajectory not failing" in v.message]

    def test_universe_omission_named(self):
        t0, t1 = make_triple(0), make_triple(1)
        traj0 = Trajectory(0, "s0", ((1, t0),), Outcome.FAILURE)
        traj1 = Trajectory(1, "s0", ((1, t1),), Outcome.SUCCESS)
        broken = TrajectorySuite(
            trajectories=(traj0, traj1),
            universe=(t0,),
            agents=(t0.agent,),
        )
        violations = validate_suite(broken)
        assert any("omits" in v.message and "act1" in v.message for v in violations)

    def test_non_contiguous_steps_flagged(self):
        t = make_triple(0)
        traj = Trajectory(0, "s0", ((1, t), (3, t)), Outcome.FAILURE)
        suite = TrajectorySuite.build([traj])
        assert any(v.step_index == 3 for v in validate_suite(suite))

    def test_star_suite_is_valid(self, star):
        assert validate_suite(star.suite) == []

    def test_random_suites_are_valid(self):
        rng = random.Random(17)
        for _ in range(50):
            assert validate_suite(random_suite(rng)) == []

    def test_candidates_are_failing_run_triples(self, star):
        assert star.suite.candidates() == [star.eta3, star.eta1]

    def test_violation_str_mentions_location(self):
        v = SuiteViolation(2, 5, "boom")
        assert "trajectory 2" in str(v) and "step 5" in str(v)


class TestSuiteFile:
    def test_round_trip(self, star, tmp_path):
        path = tmp_path / "suite.json"
        save_suite(star.suite, path)
        loaded = load_suite(path)
        assert suite_to_dict(loaded) == suite_to_dict(star.suite)

    def test_normative_fields(self, star):
        doc = suite_to_dict(star.suite)
        assert set(doc) == {"version", "task_id", "trajectories"}
        entry = doc["trajectories"][0]
        assert set(entry) == {"id", "initial_state", "outcome", "steps"}
        assert entry["outcome"] == "failure"
        assert set(entry["steps"][0]) == {"index", "agent", "action", "state", "cluster_id"}

    def test_version_checked(self, star):
        doc = suite_to_dict(star.suite)
        doc["version"] = "99"
        with pytest.raises(ValueError, match="version"):
            suite_from_dict(doc)

    def test_random_round_trip(self, tmp_path):
        rng = random.Random(23)
        for i in range(10):
            suite = random_suite(rng)
            path = tmp_path / f"s{i}.json"
            save_suite(suite, path)
            assert suite_to_dict(load_suite(path)) == suite_to_dict(suite)
