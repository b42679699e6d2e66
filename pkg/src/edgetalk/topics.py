"""Topic naming scheme: <prefix>/<device_id>/status and <prefix>/<device_id>/command."""

import re
from dataclasses import dataclass
from enum import Enum

from .errors import MalformedDeviceIdError, TopicParseError

DEVICE_ID_RE = re.compile(r"^[a-z0-9_-]+$")


def validate_device_id(device_id: str) -> str:
    if not device_id or not DEVICE_ID_RE.match(device_id):
        raise MalformedDeviceIdError(
            f"device id {device_id!r} must be non-empty lowercase [a-z0-9_-]"
        )
    return device_id


class Direction(str, Enum):
    STATUS = "status"
    COMMAND = "command"


@dataclass(frozen=True)
class TopicScheme:
    """Derives per-device topics and parses them back to (id, direction)."""

    prefix: str = "home"

    def status_topic(self, device_id: str) -> str:
        return f"{self.prefix}/{validate_device_id(device_id)}/status"

    def command_topic(self, device_id: str) -> str:
        return f"{self.prefix}/{validate_device_id(device_id)}/command"

    def status_filter(self) -> str:
        """Wildcard filter matching every device's status topic."""
        return f"{self.prefix}/+/status"

    def command_filter(self) -> str:
        return f"{self.prefix}/+/command"

    def parse(self, topic: str) -> tuple[str, Direction]:
        """Recover (device_id, direction) from a topic produced by this scheme."""
        parts = topic.split("/")
        if len(parts) != 3 or parts[0] != self.prefix:
            raise TopicParseError(f"topic {topic!r} does not match scheme prefix {self.prefix!r}")
        device_id, tail = parts[1], parts[2]
        if not DEVICE_ID_RE.match(device_id):
            raise TopicParseError(f"topic {topic!r} carries malformed device id {device_id!r}")
        try:
            direction = Direction(tail)
        except ValueError:
            raise TopicParseError(f"topic {topic!r} ends in {tail!r}, not status/command") from None
        return device_id, direction
