"""Raw-log ingestion: chunking and primitive triple extraction.

Raw execution logs are ordered text records (one per logged message).  They
are packed greedily into character-budgeted chunks, never splitting a record,
and each chunk is handed to a pluggable extractor that emits primitive
agent-action-state rows.  Two extractors ship with the package: a rules
extractor for structured logs of the form "[<agent>] <action> => <state>"
(deterministic, used offline) and an LLM extractor that prompts a
chat-completion endpoint with a versioned template.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

from .llm import ChatCompletionClient, LlmTransportError
from .model import Outcome

DEFAULT_CHAR_BUDGET = 12_000


class ExtractionError(Exception):
    """Extractor failed permanently on one chunk of a run."""


@dataclass(frozen=True)
class RawLog:
    """One run's raw execution log: ordered text records plus the outcome."""

    task_id: str
    run_id: int
    records: tuple[str, ...]
    outcome: Outcome

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise ValueError(f"raw log for run {self.run_id} has no records")


@dataclass(frozen=True)
class Chunk:
    """Contiguous slice of a log's records, at most char_budget characters.

    A record longer than the whole budget becomes a chunk on its own.
    """

    log_run_id: int
    chunk_index: int
    records: tuple[str, ...]
    char_budget: int


@dataclass(frozen=True)
class PrimitiveTriple:
    """Pre-clustering agent-action-state row with its provenance."""

    agent_name: str
    action_desc: str
    state_desc: str
    source_run: int
    source_step: int


@dataclass
class ChunkRows:
    """Extractor output for one chunk: parsed rows plus a malformed tally."""

    rows: list[tuple[str, str, str]] = field(default_factory=list)
    skipped: int = 0


class ExtractorContract(Protocol):
    """Turns one chunk into ordered (agent, action, state) rows.

    Deterministic implementations must return identical output for identical
    input; implementations must be safe to call concurrently across runs.
    """

    name: str

    def extract(self, chunk: Chunk, task_id: str) -> ChunkRows: ...


@dataclass
class ExtractionDiagnostics:
    """Per-run accounting: chunking shape, skip tally, prompt fingerprint."""

    run_id: int
    extractor: str
    chunk_count: int
    record_count: int
    emitted: int
    skipped_malformed: int
    prompt_sha256: str | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "extractor": self.extractor,
            "chunk_count": self.chunk_count,
            "record_count": self.record_count,
            "emitted": self.emitted,
            "skipped_malformed": self.skipped_malformed,
            "prompt_sha256": self.prompt_sha256,
        }


@dataclass
class ExtractionResult:
    primitives: list[PrimitiveTriple]
    diagnostics: ExtractionDiagnostics


def chunk_log(log: RawLog, char_budget: int = DEFAULT_CHAR_BUDGET) -> list[Chunk]:
    """Greedy lossless partition of a log's records into budgeted chunks."""
    if char_budget < 1:
        raise ValueError(f"char_budget must be >= 1, got {char_budget}")
    chunks: list[Chunk] = []
    current: list[str] = []
    current_len = 0
    for record in log.records:
        if current and current_len + len(record) > char_budget:
            chunks.append(Chunk(log.run_id, len(chunks), tuple(current), char_budget))
            current = []
            current_len = 0
        current.append(record)
        current_len += len(record)
    if current:
        chunks.append(Chunk(log.run_id, len(chunks), tuple(current), char_budget))
    return chunks


def extract_primitives(
    log: RawLog,
    extractor: ExtractorContract,
    char_budget: int = DEFAULT_CHAR_BUDGET,
) -> ExtractionResult:
    """Extract one run's primitives, numbering source_step globally 1..T."""
    chunks = chunk_log(log, char_budget)
    primitives: list[PrimitiveTriple] = []
    skipped = 0
    step = 0
    for chunk in chunks:
        try:
            result = extractor.extract(chunk, log.task_id)
        except LlmTransportError as exc:
            raise ExtractionError(
                f"extractor {extractor.name!r} failed on chunk {chunk.chunk_index} "
                f"of run {log.run_id}: {exc}"
            ) from exc
        skipped += result.skipped
        for agent, action, state in result.rows:
            step += 1
            primitives.append(
                PrimitiveTriple(
                    agent_name=agent,
                    action_desc=action,
                    state_desc=state,
                    source_run=log.run_id,
                    source_step=step,
                )
            )
    diagnostics = ExtractionDiagnostics(
        run_id=log.run_id,
        extractor=extractor.name,
        chunk_count=len(chunks),
        record_count=len(log.records),
        emitted=len(primitives),
        skipped_malformed=skipped,
        prompt_sha256=getattr(extractor, "prompt_sha256", None),
    )
    return ExtractionResult(primitives=primitives, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# Bundled extractors
# ---------------------------------------------------------------------------

_RULES_PATTERN = re.compile(r"^\[(?P<agent>[^\]]+)\]\s*(?P<action>.*?)\s*=>\s*(?P<state>.*)$")


class RulesExtractor:
    """Deterministic extractor for structured "[<agent>] <action> => <state>" records."""

    name = "rules"

    @staticmethod
    def matches(record: str) -> bool:
        match = _RULES_PATTERN.match(record.strip())
        return match is not None and bool(match["action"]) and bool(match["state"])

    def extract(self, chunk: Chunk, task_id: str) -> ChunkRows:
        out = ChunkRows()
        for record in chunk.records:
            match = _RULES_PATTERN.match(record.strip())
            if match is None or not match["action"] or not match["state"]:
                out.skipped += 1
                continue
            out.rows.append((match["agent"], match["action"], match["state"]))
        return out


def load_prompt_asset(filename: str) -> tuple[str, str]:
    """Load a versioned prompt template and its SHA-256 fingerprint."""
    text = resources.files("famas.assets").joinpath(filename).read_text(encoding="utf-8")
    return text, hashlib.sha256(text.encode("utf-8")).hexdigest()


class LlmExtractor:
    """Extractor that prompts a chat-completion endpoint chunk by chunk.

    Expects strict line-oriented "AGENT | ACTION | STATE" output; malformed
    lines are skipped and tallied rather than aborting the run.
    """

    name = "llm"

    def __init__(self, client: ChatCompletionClient) -> None:
        self.client = client
        self.prompt, self.prompt_sha256 = load_prompt_asset("extractor_prompt.txt")

    def extract(self, chunk: Chunk, task_id: str) -> ChunkRows:
        messages = [
            {"role": "system", "content": self.prompt},
            {
                "role": "user",
                "content": f"Task: {task_id}\n\nLog chunk:\n" + "\n".join(chunk.records),
            },
        ]
        completion = self.client.complete(messages)
        out = ChunkRows()
        for line in completion.splitlines():
            line = line.strip()
            if not line:
                continue
            parts = [part.strip() for part in line.split("|")]
            if len(parts) != 3 or not all(parts):
                out.skipped += 1
                continue
            out.rows.append((parts[0], parts[1], parts[2]))
        return out


# ---------------------------------------------------------------------------
# Raw-log file format: records as JSON Lines plus a sidecar manifest
# ---------------------------------------------------------------------------


def save_raw_logs(logs: Sequence[RawLog], logs_path: str | Path, manifest_path: str | Path, task: str = "") -> None:
    lines = []
    for log in logs:
        for seq, content in enumerate(log.records, start=1):
            lines.append(json.dumps({"run_id": log.run_id, "seq": seq, "content": content}))
    Path(logs_path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    manifest = {
        "task_id": logs[0].task_id if logs else "",
        "task": task,
        "runs": [{"run_id": log.run_id, "outcome": log.outcome.value} for log in logs],
    }
    Path(manifest_path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def load_raw_logs(logs_path: str | Path, manifest_path: str | Path) -> tuple[str, str, list[RawLog]]:
    """Read (task_id, task_text, logs ordered by run_id) from disk."""
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    task_id = manifest["task_id"]
    outcomes = {int(run["run_id"]): Outcome.from_label(run["outcome"]) for run in manifest["runs"]}

    by_run: dict[int, list[tuple[int, str]]] = {}
    for line in Path(logs_path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        by_run.setdefault(int(record["run_id"]), []).append((int(record["seq"]), record["content"]))

    missing = sorted(set(outcomes) - set(by_run))
    if missing:
        raise ValueError(f"manifest lists runs with no records: {missing}")

    logs = []
    for run_id in sorted(by_run):
        if run_id not in outcomes:
            raise ValueError(f"run {run_id} has records but no manifest entry")
        records = [content for _, content in sorted(by_run[run_id])]
        logs.append(RawLog(task_id=task_id, run_id=run_id, records=tuple(records), outcome=outcomes[run_id]))
    return task_id, manifest.get("task", ""), logs
