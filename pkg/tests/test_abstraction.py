"""Chunking, extractor behavior, raw-log file round trips."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from famas.abstraction import (
    Chunk,
    ChunkRows,
    ExtractionError,
    LlmExtractor,
    RawLog,
    RulesExtractor,
    chunk_log,
    extract_primitives,
    load_raw_logs,
    save_raw_logs,
)
from famas.llm import ChatCompletionClient, LlmSettings, LlmTransportError
from famas.model import Outcome


def raw_log(records, run_id=0, outcome=Outcome.FAILURE):
    return RawLog(task_id="t1", run_id=run_id, records=tuple(records), outcome=outcome)


class TestChunkLog:
    def test_greedy_packing(self):
        log = raw_log(["a" * 10, "b" * 10, "c" * 10])
        chunks = chunk_log(log, char_budget=25)
        assert [list(c.records) for c in chunks] == [["a" * 10, "b" * 10], ["c" * 10]]
        assert [c.chunk_index for c in chunks] == [0, 1]

    def test_oversize_record_is_its_own_chunk(self):
        log = raw_log(["x" * 100])
        chunks = chunk_log(log, char_budget=10)
        assert len(chunks) == 1
        assert chunks[0].records == ("x" * 100,)

    def test_oversize_record_does_not_absorb_followers(self):
        log = raw_log(["x" * 100, "y"])
        chunks = chunk_log(log, char_budget=10)
        assert [list(c.records) for c in chunks] == [["x" * 100], ["y"]]

    def test_zero_budget_rejected(self):
        with pytest.raises(ValueError, match="char_budget"):
            chunk_log(raw_log(["a"]), char_budget=0)

    @given(st.lists(st.integers(min_value=0, max_value=40), min_size=1, max_size=60), st.integers(min_value=1, max_value=100))
    def test_lossless_partition(self, lengths, budget):
        records = [chr(ord("a") + (i % 26)) * n for i, n in enumerate(lengths)]
        log = raw_log(records)
        chunks = chunk_log(log, char_budget=budget)
        # exact reconstruction, order preserved, no overlap
        flattened = [r for c in chunks for r in c.records]
        assert flattened == records
        assert [c.chunk_index for c in chunks] == list(range(len(chunks)))
        for chunk in chunks:
            total = sum(len(r) for r in chunk.records)
            assert total <= budget or len(chunk.records) == 1


class TestRulesExtractor:
    def test_structured_records(self):
        log = raw_log(
            [
                "[Orchestrator] plan the task => plan ready",
                "[WebSurfer] search the web => results retrieved",
                "[Coder] write code => code drafted",
                "[Coder] run code => tests green",
                "[Orchestrator] review => approved",
            ]
        )
        result = extract_primitives(log, RulesExtractor())
        assert [p.source_step for p in result.primitives] == [1, 2, 3, 4, 5]
        assert result.primitives[1].agent_name == "WebSurfer"
        assert result.primitives[1].action_desc == "search the web"
        assert result.primitives[1].state_desc == "results retrieved"
        assert result.diagnostics.skipped_malformed == 0

    def test_unparsable_records_skipped_and_tallied(self):
        log = raw_log(["free text", "[A] act => done", "### noise ###"])
        result = extract_primitives(log, RulesExtractor())
        assert len(result.primitives) == 1
        assert result.diagnostics.skipped_malformed == 2

    def test_zero_triples(self):
        log = raw_log(["nothing here"])
        result = extract_primitives(log, RulesExtractor())
        assert result.primitives == []
        assert result.diagnostics.emitted == 0

    def test_steps_number_across_chunks(self):
        records = [f"[A] act{i} => s{i}" for i in range(20)]
        log = raw_log(records)
        small = extract_primitives(log, RulesExtractor(), char_budget=30)
        large = extract_primitives(log, RulesExtractor(), char_budget=10_000)
        assert [p.source_step for p in small.primitives] == list(range(1, 21))
        assert small.primitives == large.primitives

    def test_deterministic(self):
        log = raw_log(["[A] a => b", "[B] c => d"])
        first = extract_primitives(log, RulesExtractor())
        second = extract_primitives(log, RulesExtractor())
        assert first.primitives == second.primitives


class FailingExtractor:
    name = "failing"

    def __init__(self, fail_on_chunk: int):
        self.fail_on_chunk = fail_on_chunk

    def extract(self, chunk: Chunk, task_id: str) -> ChunkRows:
        if chunk.chunk_index == self.fail_on_chunk:
            raise LlmTransportError("permanent failure")
        return ChunkRows(rows=[("A", "act", "state")])


class TestExtractionErrors:
    def test_failure_names_chunk(self):
        records = ["r" * 30, "s" * 30, "t" * 30]
        log = raw_log(records)
        with pytest.raises(ExtractionError, match="chunk 1"):
            extract_primitives(log, FailingExtractor(fail_on_chunk=1), char_budget=35)

    def test_empty_records_rejected(self):
        with pytest.raises(ValueError, match="no records"):
            raw_log([])


class FakeTransport:
    """Scripted transport: returns queued (status, body) responses."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def __call__(self, url, headers, payload, timeout):
        self.requests.append({"url": url, "headers": headers, "payload": payload})
        if not self.responses:
            raise ConnectionError("connection refused")
        return self.responses.pop(0)


def completion_body(content: str) -> str:
    import json

    return json.dumps({"choices": [{"message": {"content": content}}]})


class TestLlmClient:
    def test_wire_format(self, monkeypatch):
        monkeypatch.setenv("FAMAS_LLM_TOKEN", "secret-token")
        transport = FakeTransport([(200, completion_body("ok"))])
        client = ChatCompletionClient(
            settings=LlmSettings(base_url="http://llm.local/v1", model="m1"),
            transport=transport,
            sleep=lambda s: None,
        )
        content = client.complete([{"role": "user", "content": "hello"}])
        assert content == "ok"
        request = transport.requests[0]
        assert request["url"] == "http://llm.local/v1/chat/completions"
        assert request["payload"] == {
            "model": "m1",
            "messages": [{"role": "user", "content": "hello"}],
            "temperature": 0,
        }
        assert request["headers"]["Authorization"] == "Bearer secret-token"

    def test_retries_then_succeeds(self):
        transport = FakeTransport([(500, "boom"), (502, "boom"), (200, completion_body("ok"))])
        waits = []
        client = ChatCompletionClient(transport=transport, sleep=waits.append)
        assert client.complete([]) == "ok"
        assert waits == [1.0, 2.0]

    def test_exhausted_retries_raise(self):
        transport = FakeTransport([(500, "x")] * 4)
        waits = []
        client = ChatCompletionClient(transport=transport, sleep=waits.append)
        with pytest.raises(LlmTransportError, match="after 4 attempts"):
            client.complete([])
        assert waits == [1.0, 2.0, 4.0]

    def test_malformed_body_retried(self):
        transport = FakeTransport([(200, "not json"), (200, completion_body("fine"))])
        client = ChatCompletionClient(transport=transport, sleep=lambda s: None)
        assert client.complete([]) == "fine"


class TestLlmExtractor:
    def make(self, content: str) -> LlmExtractor:
        transport = FakeTransport([(200, completion_body(content))])
        client = ChatCompletionClient(transport=transport, sleep=lambda s: None)
        return LlmExtractor(client)

    def test_parses_line_oriented_output(self):
        extractor = self.make("WebSurfer | search | results shown\nCoder | write | file saved\n")
        log = raw_log(["whatever"])
        result = extract_primitives(log, extractor)
        assert [(p.agent_name, p.action_desc, p.state_desc) for p in result.primitives] == [
            ("WebSurfer", "search", "results shown"),
            ("Coder", "write", "file saved"),
        ]
        assert result.diagnostics.prompt_sha256 is not None

    def test_malformed_lines_skipped(self):
        extractor = self.make("garbage line\nA | act | state\ntoo | many | parts | here\n")
        result = extract_primitives(raw_log(["r"]), extractor)
        assert len(result.primitives) == 1
        assert result.diagnostics.skipped_malformed == 2

    def test_empty_completion(self):
        extractor = self.make("")
        result = extract_primitives(raw_log(["r"]), extractor)
        assert result.primitives == []


class TestRawLogFiles:
    def test_round_trip(self, tmp_path):
        logs = [
            raw_log(["[A] a => b", "[B] c => d"], run_id=0, outcome=Outcome.FAILURE),
            raw_log(["[A] a => b"], run_id=1, outcome=Outcome.SUCCESS),
        ]
        logs_path = tmp_path / "logs.jsonl"
        manifest_path = tmp_path / "manifest.json"
        save_raw_logs(logs, logs_path, manifest_path, task="find the answer")
        task_id, task, loaded = load_raw_logs(logs_path, manifest_path)
        assert task_id == "t1"
        assert task == "find the answer"
        assert loaded == logs

    def test_missing_run_records_rejected(self, tmp_path):
        logs = [raw_log(["[A] a => b"], run_id=0)]
        save_raw_logs(logs, tmp_path / "l.jsonl", tmp_path / "m.json")
        manifest = (tmp_path / "m.json").read_text()
        manifest = manifest.replace('"runs": [', '"runs": [{"run_id": 9, "outcome": "success"},')
        (tmp_path / "m.json").write_text(manifest)
        with pytest.raises(ValueError, match="no records"):
            load_raw_logs(tmp_path / "l.jsonl", tmp_path / "m.json")
