"""Prompt template byte-exactness and the input guard."""

from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from edgetalk.errors import CommandRejectedError, EmptyDeviceListError
from edgetalk.prompt import (
    PromptBundle,
    build_structured_prompt,
    sanitize_user_command,
)
from edgetalk.storage import ContextSnippet

GOLDEN = Path(__file__).parent / "data" / "golden_prompt.txt"


def sleep_bundle(**overrides):
    fields = dict(
        user_command="I want to sleep now",
        devices=("light", "tv", "fan"),
        current_sensor_values={"light": "on", "tv": "on", "fan": "off"},
    )
    fields.update(overrides)
    return PromptBundle(**fields)


def test_prompt_matches_golden_file_byte_for_byte():
    prompt = build_structured_prompt(sleep_bundle())
    assert prompt.text.encode("utf-8") == GOLDEN.read_bytes()


def test_prompt_header_lines():
    prompt = build_structured_prompt(sleep_bundle())
    lines = prompt.text.split("\n")
    assert lines[0] == "I want to sleep now."
    assert lines[1] == "Only consider these devices: light, tv, fan."
    assert lines[2] == 'Current sensor readings: {"light":"on","tv":"on","fan":"off"}'


def test_empty_context_means_no_history_block():
    prompt = build_structured_prompt(sleep_bundle())
    assert "Relevant history" not in prompt.text
    assert prompt.template_version == "v1"


def test_history_block_inserted_after_readings_line():
    snippets = (
        ContextSnippet("command 'movie night' -> tv=on", 9.0, 2),
        ContextSnippet("fan reported off", 1.0, 3),
    )
    prompt = build_structured_prompt(sleep_bundle(context_snippets=snippets))
    lines = prompt.text.split("\n")
    assert lines[3] == "Relevant history:"
    assert lines[4] == "- command 'movie night' -> tv=on"
    assert lines[5] == "- fan reported off"
    assert lines[6].startswith("First, give a 20-word description.")
    assert prompt.template_version == "v1+history"


def test_same_bundle_twice_identical_bytes():
    assert build_structured_prompt(sleep_bundle()).text == build_structured_prompt(sleep_bundle()).text


def test_empty_device_list_rejected():
    with pytest.raises(EmptyDeviceListError):
        build_structured_prompt(
            PromptBundle(user_command="x", devices=(), current_sensor_values={})
        )


def test_embedded_newline_rejected_at_build():
    with pytest.raises(CommandRejectedError):
        build_structured_prompt(sleep_bundle(user_command="sleep\nnow"))


def test_values_for_unlisted_devices_rejected():
    with pytest.raises(ValueError):
        sleep_bundle(current_sensor_values={"light": "on", "heater": "on"})


def test_first_line_command_roundtrip():
    prompt = build_structured_prompt(sleep_bundle())
    assert prompt.first_line_command() == "I want to sleep now"


# --- sanitize -------------------------------------------------------------------

def test_sanitize_trims_whitespace():
    assert sanitize_user_command("  Set the room for Study ") == "Set the room for Study"


def test_sanitize_rejects_newline():
    with pytest.raises(CommandRejectedError):
        sanitize_user_command("turn it\noff")


def test_sanitize_rejects_control_characters():
    with pytest.raises(CommandRejectedError):
        sanitize_user_command("sleep\x00now")


def test_sanitize_length_boundary():
    assert sanitize_user_command("x" * 500) == "x" * 500
    with pytest.raises(CommandRejectedError):
        sanitize_user_command("x" * 501)


def test_sanitize_rejects_empty():
    with pytest.raises(CommandRejectedError):
        sanitize_user_command("   ")


# --- properties -------------------------------------------------------------------

device_ids = st.from_regex(r"[a-z][a-z0-9_-]{0,7}", fullmatch=True)


@given(st.lists(device_ids, min_size=1, max_size=8, unique=True))
def test_prompt_length_monotone_in_device_count(devices):
    values = {d: "on" for d in devices}
    lengths = []
    for k in range(1, len(devices) + 1):
        bundle = PromptBundle(
            user_command="do the thing",
            devices=tuple(devices[:k]),
            current_sensor_values={d: values[d] for d in devices[:k]},
        )
        lengths.append(len(build_structured_prompt(bundle).text))
    assert lengths == sorted(lengths)
    assert len(set(lengths)) == len(lengths)  # strictly increasing
