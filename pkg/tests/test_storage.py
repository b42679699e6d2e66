"""Event log durability, seq discipline, and retrieval scoring (vs an independent oracle)."""

import re

import pytest

from edgetalk.errors import RecordSchemaError
from edgetalk.storage import (
    ContextSnippet,
    EventKind,
    EventLog,
    EventRecord,
    RetrievalConfig,
    render_snippet_text,
)

NOW = 1_700_000_000.0
HOUR = 3600.0


@pytest.fixture
def log(tmp_path):
    return EventLog(tmp_path / "history.jsonl")


def sensor_payload(value):
    return {"value": value, "source": "status_message"}


def trace_payload(command, acts):
    entries = [
        {"device_id": d, "desired": v, "current": "unknown", "decision": "act", "reason": ""}
        for d, v in acts
    ]
    return {"trace": {"user_command": command, "plan": {"entries": entries}}}


# --- append/seq ------------------------------------------------------------------

def test_appended_user_command_is_retrievable(log):
    seq = log.append(EventKind.USER_COMMAND, {"session_id": "s", "text": "I want to sleep now"})
    assert log.records()[-1].seq == seq
    assert log.records()[-1].payload["text"] == "I want to sleep now"


def test_seq_strictly_increments(log):
    first = log.append(EventKind.USER_COMMAND, {"session_id": "s", "text": "a"})
    second = log.append(EventKind.USER_COMMAND, {"session_id": "s", "text": "b"})
    assert second == first + 1


def test_malformed_sensor_payload_rejected(log):
    with pytest.raises(RecordSchemaError):
        log.append(EventKind.SENSOR, {"value": "on"}, device_id="tv")  # missing source
    with pytest.raises(RecordSchemaError):
        log.append(EventKind.SENSOR, sensor_payload("on"))  # missing device_id


def test_reload_preserves_records_and_seq(tmp_path):
    path = tmp_path / "history.jsonl"
    log = EventLog(path)
    log.append(EventKind.SENSOR, sensor_payload("on"), device_id="tv", timestamp=1.0)
    log.append(EventKind.SENSOR, sensor_payload("off"), device_id="tv", timestamp=2.0)
    log.close()

    reopened = EventLog(path)
    assert [r.payload["value"] for r in reopened.records()] == ["on", "off"]
    assert reopened.append(EventKind.SENSOR, sensor_payload("on"), device_id="tv") == 3


def test_records_are_one_json_object_per_line(tmp_path):
    path = tmp_path / "history.jsonl"
    log = EventLog(path)
    log.append(EventKind.USER_COMMAND, {"session_id": "s", "text": "hello"})
    log.append(EventKind.SENSOR, sensor_payload("on"), device_id="fan")
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    for line in lines:
        assert EventRecord.from_json_line(line).seq in (1, 2)


# --- query_recent -----------------------------------------------------------------

def test_query_recent_returns_last_k_descending(log):
    for i in range(5):
        log.append(EventKind.SENSOR, sensor_payload(str(i)), device_id="tv", timestamp=float(i))
    recent = log.query_recent("tv", 3)
    assert [r.payload["value"] for r in recent] == ["4", "3", "2"]


def test_query_recent_k_larger_than_store(log):
    log.append(EventKind.SENSOR, sensor_payload("on"), device_id="tv")
    assert len(log.query_recent("tv", 10)) == 1


def test_query_recent_unknown_device_empty(log):
    assert log.query_recent("ghost", 3) == []


# --- retrieval ---------------------------------------------------------------------
#
# Oracle: an independent re-implementation of the documented scoring rule
# (keyword overlap + piecewise-linear recency bonus). Expected values below
# were computed with it and frozen.

def oracle_score(query: str, devices: list[str], text: str, age_seconds: float) -> float:
    tokenize = lambda s: set(re.findall(r"[a-z0-9_]+", s.lower()))
    overlap = len((tokenize(query) | {d.lower() for d in devices}) & tokenize(text))
    if age_seconds <= 24 * HOUR:
        bonus = 1.0
    elif age_seconds >= 168 * HOUR:
        bonus = 0.0
    else:
        bonus = 1.0 - (age_seconds - 24 * HOUR) / (144 * HOUR)
    return overlap + bonus


@pytest.fixture
def seeded_log(tmp_path):
    log = EventLog(tmp_path / "history.jsonl")
    log.append(
        EventKind.USER_COMMAND,
        {"session_id": "s", "text": "I want to sleep now"},
        timestamp=NOW - 48 * HOUR,
    )
    log.append(
        EventKind.INFERENCE,
        trace_payload("Set the room for movie night", [("tv", "on"), ("light", "on")]),
        timestamp=NOW - 1 * HOUR,
    )
    log.append(
        EventKind.SENSOR,
        sensor_payload("off"),
        device_id="fan",
        timestamp=NOW - 720 * HOUR,
    )
    return log


def test_prior_movie_night_trace_ranked_first(seeded_log):
    query = "Set the room for movie night"
    devices = ["light", "tv", "fan"]
    snippets = seeded_log.retrieve_context(query, devices, limit=5, now=NOW)

    records = seeded_log.records()
    expected = []
    for record in records:
        text = render_snippet_text(record)
        score = oracle_score(query, devices, text, NOW - record.timestamp)
        if score > 0:
            expected.append(ContextSnippet(text, score, record.seq))
    expected.sort(key=lambda s: (-s.score, -s.source_seq))

    assert snippets == expected
    # frozen oracle values: overlap 8 + bonus 1.0 for the movie-night trace
    assert snippets[0].source_seq == 2
    assert snippets[0].score == pytest.approx(9.0)
    assert snippets[1] == ContextSnippet("fan reported off", pytest.approx(1.0), 3)
    assert snippets[2].score == pytest.approx(1.0 - 24.0 / 144.0)


def test_limit_zero_returns_empty(seeded_log):
    assert seeded_log.retrieve_context("anything", [], 0, now=NOW) == []


def test_no_overlap_and_nothing_recent_returns_empty(tmp_path):
    log = EventLog(tmp_path / "history.jsonl")
    log.append(
        EventKind.USER_COMMAND,
        {"session_id": "s", "text": "completely unrelated"},
        timestamp=NOW - 1000 * HOUR,
    )
    assert log.retrieve_context("warp the nacelles", ["holodeck"], 5, now=NOW) == []


def test_retrieval_is_deterministic(seeded_log):
    args = ("Set the room for movie night", ["light", "tv", "fan"], 5)
    assert seeded_log.retrieve_context(*args, now=NOW) == seeded_log.retrieve_context(*args, now=NOW)


def test_snippet_text_capped_at_200_chars(log):
    log.append(
        EventKind.USER_COMMAND,
        {"session_id": "s", "text": "x" * 500},
        timestamp=NOW,
    )
    snippets = log.retrieve_context("x" * 500, [], 1, now=NOW)
    assert len(snippets) == 1
    assert len(snippets[0].text) <= 200


def test_custom_recency_constants(tmp_path):
    log = EventLog(tmp_path / "h.jsonl", retrieval=RetrievalConfig(full_hours=1, zero_hours=2))
    log.append(EventKind.USER_COMMAND, {"session_id": "s", "text": "zzz"}, timestamp=NOW - 3 * HOUR)
    # outside the shortened window and no overlap: nothing comes back
    assert log.retrieve_context("unrelated", [], 5, now=NOW) == []
