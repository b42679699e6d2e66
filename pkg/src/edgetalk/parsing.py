"""Extracting and validating the {description, commands[]} structure from raw model text.

Models wrap the JSON in prose and sometimes emit it slightly broken; the
strict parse is tried first, then exactly one repair pass with two rules:
insert the comma missing between adjacent object literals in an array, and
strip trailing commas. Anything else stays a parse failure.
"""

import json
from dataclasses import dataclass, replace
from typing import Iterator

from .errors import ExtractionError, ResponseSchemaError, UnparseableResponseError
from .processing import SynonymTable, DEFAULT_TABLE

EXCERPT_CHARS = 200
_WS = " \t\r\n"


@dataclass(frozen=True)
class ActionCommand:
    device: str
    action: str
    mode: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "ActionCommand":
        return cls(device=doc["device"], action=doc["action"], mode=doc.get("mode"))


@dataclass(frozen=True)
class ParsedResponse:
    description: str
    commands: tuple[ActionCommand, ...]
    repair_applied: bool = False
    diagnostics: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, doc: dict) -> "ParsedResponse":
        return cls(
            description=doc["description"],
            commands=tuple(ActionCommand.from_dict(c) for c in doc["commands"]),
            repair_applied=doc.get("repair_applied", False),
            diagnostics=tuple(doc.get("diagnostics", ())),
        )


def iter_balanced_blocks(text: str) -> Iterator[str]:
    """Yield top-level balanced {...} substrings, ignoring braces inside strings."""
    depth = 0
    start = -1
    in_string = False
    escape = False
    for i, ch in enumerate(text):
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            if depth > 0:
                in_string = True
            continue
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                yield text[start : i + 1]


def extract_json_block(raw_text: str) -> str:
    """First balanced-brace substring mentioning "commands"; error if none exists."""
    if not raw_text:
        raise ExtractionError("")
    for block in iter_balanced_blocks(raw_text):
        if '"commands"' in block:
            return block
    raise ExtractionError(raw_text[:EXCERPT_CHARS])


def repair_block(candidate: str) -> str:
    """One repair pass: comma between adjacent array objects, trailing commas dropped.

    Valid JSON passes through unchanged (neither pattern can occur in it).
    """
    out: list[str] = []
    stack: list[str] = []
    in_string = False
    escape = False
    i = 0
    n = len(candidate)
    while i < n:
        ch = candidate[i]
        if in_string:
            out.append(ch)
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            i += 1
            continue
        if ch == '"':
            in_string = True
            out.append(ch)
        elif ch in "{[":
            stack.append(ch)
            out.append(ch)
        elif ch in "}]":
            if stack:
                stack.pop()
            out.append(ch)
            if ch == "}" and stack and stack[-1] == "[":
                j = i + 1
                while j < n and candidate[j] in _WS:
                    j += 1
                if j < n and candidate[j] == "{":
                    out.append(",")
        elif ch == ",":
            j = i + 1
            while j < n and candidate[j] in _WS:
                j += 1
            if j < n and candidate[j] in "}]":
                i += 1
                continue  # trailing comma dropped
            out.append(ch)
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def _looks_like_placeholder(value: str) -> bool:
    # an echoed response skeleton still carries its <angle-bracket> slots
    return "<" in value or ">" in value


def _check_schema(doc: object) -> tuple[str, tuple[ActionCommand, ...], tuple[str, ...]]:
    if not isinstance(doc, dict):
        raise ResponseSchemaError("top level is not an object")
    diagnostics: list[str] = []
    for key in doc.keys() - {"description", "commands"}:
        diagnostics.append(f"ignored unknown field {key!r}")
    description = doc.get("description")
    if not isinstance(description, str):
        raise ResponseSchemaError("'description' must be a string")
    raw_commands = doc.get("commands")
    if not isinstance(raw_commands, list):
        raise ResponseSchemaError("'commands' must be an array")
    commands: list[ActionCommand] = []
    for index, item in enumerate(raw_commands):
        if not isinstance(item, dict):
            raise ResponseSchemaError(f"commands[{index}] is not an object")
        device = item.get("device")
        action = item.get("action")
        if not isinstance(device, str) or not device:
            raise ResponseSchemaError(f"commands[{index}] missing device string")
        if not isinstance(action, str) or not action:
            raise ResponseSchemaError(f"commands[{index}] missing action string")
        if _looks_like_placeholder(device) or _looks_like_placeholder(action):
            raise ResponseSchemaError(f"commands[{index}] carries unfilled placeholders")
        mode = item.get("mode")
        if mode is not None and not isinstance(mode, str):
            raise ResponseSchemaError(f"commands[{index}] mode must be a string")
        for key in item.keys() - {"device", "action", "mode"}:
            diagnostics.append(f"ignored unknown field {key!r} in commands[{index}]")
        commands.append(ActionCommand(device=device, action=action, mode=mode))
    return description, tuple(commands), tuple(diagnostics)


def parse_commands(candidate: str) -> ParsedResponse:
    """Strict parse, then the single repair pass; schema-check the result."""
    repair_applied = False
    try:
        doc = json.loads(candidate)
    except json.JSONDecodeError:
        repaired = repair_block(candidate)
        try:
            doc = json.loads(repaired)
        except json.JSONDecodeError as exc:
            raise UnparseableResponseError(
                f"block unparseable even after repair: {exc.msg} at line {exc.lineno}"
            ) from exc
        repair_applied = True
    description, commands, diagnostics = _check_schema(doc)
    return ParsedResponse(
        description=description,
        commands=commands,
        repair_applied=repair_applied,
        diagnostics=diagnostics,
    )


def parse_response(raw_text: str) -> ParsedResponse:
    """Parse the first block that passes schema; later blocks are fallbacks.

    Models sometimes echo the prompt's response skeleton before the real
    answer; the skeleton fails schema (placeholder slots), so scanning
    continues to the next candidate.
    """
    last_error: Exception | None = None
    found_candidate = False
    for block in iter_balanced_blocks(raw_text):
        if '"commands"' not in block:
            continue
        found_candidate = True
        try:
            return parse_commands(block)
        except (UnparseableResponseError, ResponseSchemaError) as exc:
            last_error = exc
    if not found_candidate:
        raise ExtractionError(raw_text[:EXCERPT_CHARS])
    raise last_error


def canonicalize(
    parsed: ParsedResponse,
    registry,
    table: SynonymTable = DEFAULT_TABLE,
) -> ParsedResponse:
    """Lowercase and match device ids against the registry; map actions through synonyms.

    Unmatched devices are kept but flagged so the reconciler can reject them;
    this never fails.
    """
    diagnostics = list(parsed.diagnostics)
    commands: list[ActionCommand] = []
    for command in parsed.commands:
        device = command.device.strip().lower()
        if device not in registry:
            diagnostics.append(f"unknown device {device!r}")
        action, _ = table.canonicalize(command.action.strip().lower())
        commands.append(ActionCommand(device=device, action=action, mode=command.mode))
    return replace(parsed, commands=tuple(commands), diagnostics=tuple(diagnostics))


def serialize_response(parsed: ParsedResponse) -> str:
    """Render the canonical block form; re-parsing it yields the same commands."""
    doc = {
        "description": parsed.description,
        "commands": [
            {"device": c.device, "action": c.action, **({"mode": c.mode} if c.mode else {})}
            for c in parsed.commands
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False)
