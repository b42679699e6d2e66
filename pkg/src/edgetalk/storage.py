"""Append-only event history and the lexical context retrieval that feeds prompts.

Records are newline-delimited JSON, one object per line, flushed to disk
before `append` returns. A single writer appends; readers always see a
consistent prefix.
"""

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

from .errors import RecordSchemaError

logger = logging.getLogger(__name__)

SNIPPET_MAX_CHARS = 200
WORD_RE = re.compile(r"[a-z0-9_]+")


class EventKind(str, Enum):
    SENSOR = "sensor"
    USER_COMMAND = "user_command"
    DISPATCHED_ACTION = "dispatched_action"
    INFERENCE = "inference"


# required payload keys per kind; inference payloads carry a whole trace dict
_PAYLOAD_KEYS: dict[EventKind, set[str]] = {
    EventKind.SENSOR: {"value", "source"},
    EventKind.USER_COMMAND: {"session_id", "text"},
    EventKind.DISPATCHED_ACTION: {"action", "inference_seq"},
    EventKind.INFERENCE: {"trace"},
}

_NEEDS_DEVICE_ID = {EventKind.SENSOR, EventKind.DISPATCHED_ACTION}


@dataclass(frozen=True)
class EventRecord:
    seq: int
    kind: EventKind
    timestamp: float
    payload: dict[str, Any]
    device_id: str | None = None

    def to_json_line(self) -> str:
        doc = {
            "seq": self.seq,
            "kind": self.kind.value,
            "timestamp": self.timestamp,
            "device_id": self.device_id,
            "payload": self.payload,
        }
        return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_json_line(cls, line: str) -> "EventRecord":
        doc = json.loads(line)
        return cls(
            seq=doc["seq"],
            kind=EventKind(doc["kind"]),
            timestamp=doc["timestamp"],
            payload=doc["payload"],
            device_id=doc.get("device_id"),
        )


@dataclass(frozen=True)
class ContextSnippet:
    """One-line summary of a past event plus its retrieval score."""

    text: str
    score: float
    source_seq: int


@dataclass(frozen=True)
class RetrievalConfig:
    """Recency bonus shape: full bonus inside `full_hours`, zero past `zero_hours`."""

    full_hours: float = 24.0
    zero_hours: float = 168.0


def _validate_payload(kind: EventKind, payload: dict[str, Any], device_id: str | None) -> None:
    if not isinstance(payload, dict):
        raise RecordSchemaError(f"{kind.value} payload must be an object")
    missing = _PAYLOAD_KEYS[kind] - payload.keys()
    if missing:
        raise RecordSchemaError(f"{kind.value} payload missing keys {sorted(missing)}")
    if kind in _NEEDS_DEVICE_ID and not device_id:
        raise RecordSchemaError(f"{kind.value} record requires a device_id")


def render_snippet_text(record: EventRecord) -> str:
    """Single-line human summary used both for retrieval matching and prompts."""
    if record.kind is EventKind.SENSOR:
        text = f"{record.device_id} reported {record.payload['value']}"
    elif record.kind is EventKind.USER_COMMAND:
        text = f"user command: {record.payload['text']}"
    elif record.kind is EventKind.DISPATCHED_ACTION:
        text = f"sent {record.payload['action']} to {record.device_id}"
    else:
        trace = record.payload.get("trace", {})
        command = trace.get("user_command", "")
        plan = trace.get("plan") or {}
        acts = [
            f"{entry['device_id']}={entry['desired']}"
            for entry in plan.get("entries", [])
            if entry.get("decision") == "act"
        ]
        outcome = " ".join(acts) if acts else "no action"
        text = f"command '{command}' -> {outcome}"
    text = " ".join(text.split())
    return text[:SNIPPET_MAX_CHARS]


def _recency_bonus(age_seconds: float, config: RetrievalConfig) -> float:
    full = config.full_hours * 3600.0
    zero = config.zero_hours * 3600.0
    if age_seconds <= full:
        return 1.0
    if age_seconds >= zero:
        return 0.0
    return 1.0 - (age_seconds - full) / (zero - full)


def score_snippet(
    query_terms: set[str], record_text: str, age_seconds: float, config: RetrievalConfig
) -> float:
    """Keyword overlap between query terms and the record text, plus recency."""
    record_terms = set(WORD_RE.findall(record_text.lower()))
    overlap = len(query_terms & record_terms)
    return overlap + _recency_bonus(age_seconds, config)


class EventLog:
    """Durable append-only store over one JSONL file."""

    def __init__(self, path: str | Path, retrieval: RetrievalConfig | None = None):
        self.path = Path(path)
        self.retrieval = retrieval or RetrievalConfig()
        self._lock = threading.Lock()
        self._records: list[EventRecord] = []
        self._next_seq = 1
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            self._load()
        self._fh = open(self.path, "a", encoding="utf-8")

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line_number, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = EventRecord.from_json_line(line)
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    logger.warning("skipping corrupt history line %d: %s", line_number, exc)
                    continue
                self._records.append(record)
        if self._records:
            self._next_seq = self._records[-1].seq + 1

    def close(self) -> None:
        self._fh.close()

    # --- writes ----------------------------------------------------------------

    def append(
        self,
        kind: EventKind | str,
        payload: dict[str, Any],
        device_id: str | None = None,
        timestamp: float | None = None,
    ) -> int:
        """Validate, persist (flushed), and index one record; returns its seq."""
        kind = EventKind(kind)
        _validate_payload(kind, payload, device_id)
        with self._lock:
            record = EventRecord(
                seq=self._next_seq,
                kind=kind,
                timestamp=timestamp if timestamp is not None else time.time(),
                payload=payload,
                device_id=device_id,
            )
            self._fh.write(record.to_json_line() + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._records.append(record)
            self._next_seq += 1
            return record.seq

    # --- reads -----------------------------------------------------------------

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def records(self) -> list[EventRecord]:
        with self._lock:
            return list(self._records)

    def query_recent(self, device_id: str, k: int) -> list[EventRecord]:
        """Last k records for a device, newest first."""
        if k < 0:
            raise ValueError("k must be >= 0")
        with self._lock:
            matching = [r for r in self._records if r.device_id == device_id]
        return list(reversed(matching[-k:])) if k else []

    def retrieve_context(
        self,
        user_command: str,
        device_ids: Iterable[str],
        limit: int,
        now: float | None = None,
    ) -> list[ContextSnippet]:
        """Rank history snippets against the command plus device vocabulary.

        Score = keyword overlap + recency bonus; zero-score records are
        excluded; ties break toward higher seq. Deterministic for fixed store
        contents.
        """
        if limit < 0:
            raise ValueError("limit must be >= 0")
        if limit == 0:
            return []
        now = now if now is not None else time.time()
        query_terms = set(WORD_RE.findall(user_command.lower()))
        query_terms.update(d.lower() for d in device_ids)
        scored: list[ContextSnippet] = []
        for record in self.records():
            text = render_snippet_text(record)
            score = score_snippet(query_terms, text, now - record.timestamp, self.retrieval)
            if score > 0:
                scored.append(ContextSnippet(text=text, score=score, source_seq=record.seq))
        scored.sort(key=lambda s: (-s.score, -s.source_seq))
        return scored[:limit]
