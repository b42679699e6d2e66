"""Telemetry normalization, deduplication, and windowed aggregation.

Everything here is a pure function over its inputs; safe from any thread.
"""

import statistics
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import AggregationTypeError, UndecodablePayloadError

NON_CANONICAL = "non_canonical"
UNKNOWN_UNIT = "unknown_unit"

KNOWN_UNITS = frozenset({"°C", "C", "°F", "F", "K", "%", "lux", "ppm", "hPa", "W", "V", "A"})

DEFAULT_SYNONYMS: dict[str, list[str]] = {
    "on": ["1", "true", "yes", "enable", "enabled", "start", "turn on"],
    "off": ["0", "false", "no", "disable", "disabled", "stop", "turn off"],
}


@dataclass(frozen=True)
class NumericValue:
    """A scalar reading with its unit tag."""

    magnitude: float
    unit: str | None = None

    def render(self) -> str:
        text = f"{self.magnitude:g}"
        return f"{text} {self.unit}" if self.unit else text


@dataclass(frozen=True)
class NormalizedReading:
    device_id: str
    value: str | NumericValue
    timestamp: float
    flags: tuple[str, ...] = ()


class SynonymTable:
    """Maps raw actuator vocabulary onto canonical lowercase action strings."""

    def __init__(self, synonyms: dict[str, list[str]] | None = None):
        table = synonyms if synonyms is not None else DEFAULT_SYNONYMS
        self._canonical = {canon.lower() for canon in table}
        self._lookup: dict[str, str] = {}
        for canon, variants in table.items():
            for variant in variants:
                self._lookup[variant.lower()] = canon.lower()

    def canonicalize(self, value: str) -> tuple[str, bool]:
        """Return (canonical value, True) on a hit, (input, False) otherwise."""
        lowered = value.strip().lower()
        if lowered in self._canonical:
            return lowered, True
        if lowered in self._lookup:
            return self._lookup[lowered], True
        return value, False

    def as_dict(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {c: [] for c in sorted(self._canonical)}
        for variant, canon in self._lookup.items():
            out.setdefault(canon, []).append(variant)
        return out


DEFAULT_TABLE = SynonymTable()


def normalize(
    payload: bytes | str,
    kind: str,
    device_id: str,
    timestamp: float,
    table: SynonymTable = DEFAULT_TABLE,
    unit: str | None = None,
) -> NormalizedReading:
    """Canonicalize one raw reading.

    Actuator payloads map through the synonym table ("ON", "1", "true" all
    become "on"); values the table does not know pass through verbatim but are
    flagged non-canonical. Sensor payloads that parse as numbers become
    `NumericValue` with the given unit tag (flagged when the unit is unknown).

    Raises:
        UndecodablePayloadError: payload bytes are not valid UTF-8.
    """
    if isinstance(payload, bytes):
        try:
            text = payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise UndecodablePayloadError(f"payload for {device_id!r} is not UTF-8") from exc
    else:
        text = payload
    text = text.strip()

    if kind == "sensor":
        try:
            magnitude = float(text)
        except ValueError:
            pass
        else:
            flags = () if unit in KNOWN_UNITS else (UNKNOWN_UNIT,)
            return NormalizedReading(device_id, NumericValue(magnitude, unit), timestamp, flags)

    canonical, mapped = table.canonicalize(text)
    flags = () if mapped else (NON_CANONICAL,)
    return NormalizedReading(device_id, canonical, timestamp, flags)


def dedupe(readings: Iterable[NormalizedReading]) -> Iterator[NormalizedReading]:
    """Collapse consecutive readings with identical values, keeping the first."""
    previous_value = object()
    for reading in readings:
        if reading.value != previous_value:
            yield reading
            previous_value = reading.value


def aggregate_window(
    readings: Iterable[NormalizedReading],
    window_seconds: float,
    fn: str,
    now: float,
) -> str | NumericValue | float | None:
    """Summarize the readings whose timestamps fall inside [now-window, now].

    `fn` is one of last/mean/min/max; mean/min/max require numeric readings.
    An empty window yields None.
    """
    if fn not in ("last", "mean", "min", "max"):
        raise ValueError(f"unsupported aggregation {fn!r}")
    in_window = [r for r in readings if now - window_seconds <= r.timestamp <= now]
    if not in_window:
        return None
    if fn == "last":
        return max(enumerate(in_window), key=lambda pair: (pair[1].timestamp, pair[0]))[1].value
    magnitudes = []
    for reading in in_window:
        if not isinstance(reading.value, NumericValue):
            raise AggregationTypeError(
                f"{fn} aggregation needs numeric readings, got {reading.value!r}"
            )
        magnitudes.append(reading.value.magnitude)
    if fn == "mean":
        return statistics.fmean(magnitudes)
    return min(magnitudes) if fn == "min" else max(magnitudes)
