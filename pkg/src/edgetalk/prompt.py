"""Structured prompt construction and the user-command input guard.

The prompt layout is fixed: command line, allowed device list, current value
map as compact JSON (insertion order), the instruction line, and the response
skeleton the model must fill in. An optional history block can be inserted
after the readings line; it is off by default so the canonical layout stays
byte-stable.
"""

import json
from dataclasses import dataclass, field

from .errors import CommandRejectedError, EmptyDeviceListError
from .storage import ContextSnippet

MAX_COMMAND_LENGTH = 500

TEMPLATE_VERSION = "v1"
TEMPLATE_VERSION_WITH_HISTORY = "v1+history"

RESPONSE_SKELETON = (
    "{\n"
    '  "description": "<short description>",\n'
    '  "commands": [\n'
    '    {"device": "<device>", "action": "<action>", "mode": "<mode> (optional)" }\n'
    "  ]\n"
    "}"
)


@dataclass(frozen=True)
class PromptBundle:
    """Everything the template needs for one inference."""

    user_command: str
    devices: tuple[str, ...]
    current_sensor_values: dict[str, str]
    context_snippets: tuple[ContextSnippet, ...] = ()

    def __post_init__(self):
        stray = set(self.current_sensor_values) - set(self.devices)
        if stray:
            raise ValueError(f"values given for unlisted devices: {sorted(stray)}")


@dataclass(frozen=True)
class StructuredPrompt:
    text: str
    template_version: str = TEMPLATE_VERSION

    def first_line_command(self) -> str:
        """Recover the user command from line 1 (dropping the template's period)."""
        line = self.text.split("\n", 1)[0]
        return line[:-1] if line.endswith(".") else line


def sanitize_user_command(text: str, max_length: int = MAX_COMMAND_LENGTH) -> str:
    """Trim and vet a raw user command.

    Rejects anything with embedded newlines or other control characters (the
    prompt is line-oriented, so a newline would let input masquerade as
    template text) and anything over `max_length` characters.
    """
    cleaned = text.strip()
    if not cleaned:
        raise CommandRejectedError("empty command")
    if len(cleaned) > max_length:
        raise CommandRejectedError(f"command exceeds {max_length} characters")
    for ch in cleaned:
        if ord(ch) < 0x20 or ch == "\x7f":
            raise CommandRejectedError(f"control character {ch!r} not allowed")
    return cleaned


def build_structured_prompt(bundle: PromptBundle) -> StructuredPrompt:
    """Render the bundle through the fixed template; identical bundles give identical bytes."""
    if not bundle.devices:
        raise EmptyDeviceListError("prompt needs at least one device")
    if "\n" in bundle.user_command or "\r" in bundle.user_command:
        raise CommandRejectedError("user command must be a single line")
    command = bundle.user_command.strip()
    values_json = json.dumps(bundle.current_sensor_values, separators=(",", ":"), ensure_ascii=False)
    parts = [
        f"{command}.\n",
        f"Only consider these devices: {', '.join(bundle.devices)}.\n",
        f"Current sensor readings: {values_json}\n",
    ]
    version = TEMPLATE_VERSION
    if bundle.context_snippets:
        history_lines = "".join(f"- {snippet.text}\n" for snippet in bundle.context_snippets)
        parts.append(f"Relevant history:\n{history_lines}")
        version = TEMPLATE_VERSION_WITH_HISTORY
    parts.append(
        "First, give a 20-word description. Then respond ONLY in the following JSON format:\n"
    )
    parts.append(RESPONSE_SKELETON)
    return StructuredPrompt(text="".join(parts), template_version=version)
