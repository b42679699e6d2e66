"""Inference backends behind one `generate` contract.

Two kinds ship: an HTTP client for a local model server's generate endpoint,
and a deterministic scripted backend (exact user-command match, canned
response, injected delay) for tests and benchmarks.
"""

import json
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import requests

from .errors import (
    BackendConnectionError,
    BackendHTTPError,
    BackendProtocolError,
    BackendTimeoutError,
    ScriptParseError,
    UnscriptedInputError,
)
from .prompt import StructuredPrompt


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # "http" | "scripted"
    endpoint: str | None = None
    model_name: str | None = None
    timeout_seconds: float = 300.0
    script_path: str | None = None

    def __post_init__(self):
        if self.kind == "http":
            if not self.endpoint or not self.model_name:
                raise ValueError("http backend needs endpoint and model_name")
            if self.script_path is not None:
                raise ValueError("http backend must not set script_path")
        elif self.kind == "scripted":
            if not self.script_path:
                raise ValueError("scripted backend needs script_path")
            if self.endpoint is not None or self.model_name is not None:
                raise ValueError("scripted backend must not set endpoint/model_name")
        else:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout must be > 0")


@dataclass(frozen=True)
class InferenceResult:
    raw_text: str
    latency: float  # wall-clock seconds, request to complete response
    backend_id: str


@dataclass(frozen=True)
class ScriptEntry:
    match: str  # exact user command
    response: str
    delay_seconds: float = 0.0


class HttpBackend:
    """POSTs {"model", "prompt", "stream": false} and reads the `response` field."""

    def __init__(self, endpoint: str, model_name: str, timeout_seconds: float = 300.0):
        self.endpoint = endpoint
        self.model_name = model_name
        self.timeout_seconds = timeout_seconds
        self.backend_id = f"http:{model_name}"

    def request_body(self, prompt: StructuredPrompt) -> bytes:
        payload = {"model": self.model_name, "prompt": prompt.text, "stream": False}
        return json.dumps(payload, separators=(",", ":")).encode("utf-8")

    def generate(self, prompt: StructuredPrompt) -> InferenceResult:
        started = time.monotonic()
        try:
            response = requests.post(
                self.endpoint,
                data=self.request_body(prompt),
                headers={"Content-Type": "application/json"},
                timeout=self.timeout_seconds,
            )
        except requests.Timeout as exc:
            raise BackendTimeoutError(f"no answer within {self.timeout_seconds}s") from exc
        except requests.ConnectionError as exc:
            raise BackendConnectionError(f"cannot reach {self.endpoint}: {exc}") from exc
        latency = time.monotonic() - started
        if response.status_code >= 400:
            raise BackendHTTPError(response.status_code, response.text[:200])
        try:
            body = response.json()
        except ValueError as exc:
            raise BackendProtocolError(f"non-JSON answer: {response.text[:200]!r}") from exc
        raw_text = body.get("response")
        if not isinstance(raw_text, str) or not raw_text:
            raise BackendProtocolError("answer is missing a non-empty 'response' field")
        return InferenceResult(raw_text=raw_text, latency=latency, backend_id=self.backend_id)


class ScriptedBackend:
    """Answers exactly the scripted user commands, after the scripted delay."""

    def __init__(self, entries: list[ScriptEntry], backend_id: str = "scripted"):
        self.backend_id = backend_id
        self._entries: dict[str, ScriptEntry] = {}
        for entry in entries:
            if entry.match in self._entries:
                raise ValueError(f"duplicate script entry for {entry.match!r}")
            self._entries[entry.match] = entry

    def delay_for(self, user_command: str) -> float | None:
        entry = self._entries.get(user_command)
        return entry.delay_seconds if entry else None

    def generate(self, prompt: StructuredPrompt) -> InferenceResult:
        started = time.monotonic()
        command = prompt.first_line_command()
        entry = self._entries.get(command)
        if entry is None:
            raise UnscriptedInputError(f"no script entry for command {command!r}")
        if entry.delay_seconds > 0:
            time.sleep(entry.delay_seconds)
        latency = time.monotonic() - started
        return InferenceResult(raw_text=entry.response, latency=latency, backend_id=self.backend_id)


def load_script(path: str | Path, backend_id: str | None = None) -> ScriptedBackend:
    """Load a JSONL script file of {match, response, delay_seconds} entries."""
    path = Path(path)
    entries: list[ScriptEntry] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ScriptParseError(line_number, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(doc, dict):
                raise ScriptParseError(line_number, "entry must be an object")
            match = doc.get("match")
            response = doc.get("response")
            delay = doc.get("delay_seconds", 0.0)
            if not isinstance(match, str) or not match:
                raise ScriptParseError(line_number, "missing or empty 'match'")
            if not isinstance(response, str) or not response:
                raise ScriptParseError(line_number, "missing or empty 'response'")
            if not isinstance(delay, (int, float)) or delay < 0:
                raise ScriptParseError(line_number, "'delay_seconds' must be >= 0")
            if match in seen:
                raise ScriptParseError(line_number, f"duplicate match {match!r}")
            seen.add(match)
            entries.append(ScriptEntry(match=match, response=response, delay_seconds=float(delay)))
    return ScriptedBackend(entries, backend_id=backend_id or f"scripted:{path.stem}")


def bundled_script_path(name: str) -> Path:
    """Path to a script shipped with the package (e.g. 'llama3', 'gemma2b')."""
    return Path(resources.files("edgetalk").joinpath(f"data/scripts/{name}.jsonl"))


def build_backend(config: BackendConfig):
    if config.kind == "http":
        return HttpBackend(config.endpoint, config.model_name, config.timeout_seconds)
    return load_script(config.script_path)


# Published footprint figures for small open models, kept as configuration
# guidance only; nothing here enforces resource limits.
MODEL_MEMORY_PRESETS: dict[str, dict[str, object]] = {
    "tinyllama-1.1b": {"params": "1.1B", "q4_size_gb": (0.55, 0.7), "min_ram_gb": 1.5},
    "stablelm-zephyr-3b": {"params": "3B", "q4_size_gb": (1.8, 2.2), "min_ram_gb": 4.0},
    "phi-2": {"params": "2.7B", "q4_size_gb": (1.5, 1.8), "min_ram_gb": 3.0},
    "gemma-2b": {"params": "2B", "q4_size_gb": (1.3, 1.6), "min_ram_gb": 3.0},
    "llama-2-7b": {"params": "7B", "q4_size_gb": (3.8, 4.5), "min_ram_gb": 6.0},
    "mistral-7b": {"params": "7B", "q4_size_gb": (4.0, 4.5), "min_ram_gb": 6.0},
    "gpt-j-6b": {"params": "6B", "q4_size_gb": (3.0, 3.5), "min_ram_gb": 5.0},
    "distilgpt-2": {"params": "82M", "q4_size_gb": (0.3, 0.5), "min_ram_gb": 1.0},
}
