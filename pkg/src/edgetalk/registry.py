"""Device catalog and last-known-state store.

Holds one `DeviceDescriptor` per registered device plus its live
`DeviceState`, fed by incoming status messages. Updates are serialized per
registry; snapshots are immutable point-in-time copies safe to share across
threads.
"""

import logging
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Callable, Mapping

from .errors import DuplicateDeviceError, TopicMismatchError
from .processing import NumericValue
from .topics import TopicScheme, validate_device_id
from .util import Counters

logger = logging.getLogger(__name__)

UNKNOWN_VALUE = "unknown"


class DeviceKind(str, Enum):
    LIGHT = "light"
    FAN = "fan"
    TV = "tv"
    SENSOR = "sensor"
    OTHER = "other"


ACTUATOR_KINDS = frozenset({DeviceKind.LIGHT, DeviceKind.FAN, DeviceKind.TV, DeviceKind.OTHER})


class StateSource(str, Enum):
    STATUS_MESSAGE = "status_message"
    ASSUMED_AFTER_COMMAND = "assumed_after_command"
    INITIAL = "initial"


@dataclass(frozen=True)
class DeviceDescriptor:
    """Catalog entry: id, kind, accepted actions, and the derived topics."""

    id: str
    kind: DeviceKind
    capabilities: frozenset[str]
    status_topic: str
    command_topic: str

    @classmethod
    def from_scheme(
        cls,
        device_id: str,
        kind: DeviceKind | str,
        capabilities,
        scheme: TopicScheme,
    ) -> "DeviceDescriptor":
        kind = DeviceKind(kind)
        validate_device_id(device_id)
        capabilities = frozenset(capabilities)
        if kind in ACTUATOR_KINDS and not capabilities:
            raise ValueError(f"actuator device {device_id!r} needs at least one capability")
        return cls(
            id=device_id,
            kind=kind,
            capabilities=capabilities,
            status_topic=scheme.status_topic(device_id),
            command_topic=scheme.command_topic(device_id),
        )

    def is_actuator(self) -> bool:
        return self.kind in ACTUATOR_KINDS


@dataclass(frozen=True)
class DeviceState:
    device_id: str
    value: str | NumericValue
    updated_at: float
    source: StateSource

    def value_text(self) -> str:
        return self.value.render() if isinstance(self.value, NumericValue) else self.value


@dataclass(frozen=True)
class StateSnapshot:
    """Immutable point-in-time view covering every registered device."""

    states: Mapping[str, DeviceState]
    taken_at: float

    def value_map(self) -> dict[str, str]:
        """Project states to displayable value strings, registration order."""
        return {device_id: state.value_text() for device_id, state in self.states.items()}

    def value_of(self, device_id: str) -> str:
        state = self.states.get(device_id)
        return state.value_text() if state is not None else UNKNOWN_VALUE


# listener(device_id, state) fires after each accepted state change
StateListener = Callable[[str, DeviceState], None]


@dataclass
class _Entry:
    descriptor: DeviceDescriptor
    state: DeviceState
    lock: threading.Lock = field(default_factory=threading.Lock)


class DeviceRegistry:
    """Thread-safe catalog + state store with snapshot isolation."""

    def __init__(self, scheme: TopicScheme | None = None):
        self.scheme = scheme or TopicScheme()
        self._entries: dict[str, _Entry] = {}
        self._registry_lock = threading.RLock()
        self._listeners: list[StateListener] = []
        self.counters = Counters()

    # --- catalog ---------------------------------------------------------------

    def register_device(self, descriptor: DeviceDescriptor) -> DeviceDescriptor:
        validate_device_id(descriptor.id)
        if descriptor.kind in ACTUATOR_KINDS and not descriptor.capabilities:
            raise ValueError(f"actuator device {descriptor.id!r} needs at least one capability")
        expected_status = self.scheme.status_topic(descriptor.id)
        expected_command = self.scheme.command_topic(descriptor.id)
        if descriptor.status_topic != expected_status or descriptor.command_topic != expected_command:
            raise TopicMismatchError(
                f"device {descriptor.id!r} topics must be "
                f"({expected_status!r}, {expected_command!r})"
            )
        with self._registry_lock:
            if descriptor.id in self._entries:
                raise DuplicateDeviceError(f"device {descriptor.id!r} already registered")
            # timestamp 0 so the first genuine report is never considered stale
            initial = DeviceState(descriptor.id, UNKNOWN_VALUE, 0.0, StateSource.INITIAL)
            self._entries[descriptor.id] = _Entry(descriptor, initial)
        return descriptor

    def list_devices(self) -> list[DeviceDescriptor]:
        """Descriptors in registration order (keeps prompt text deterministic)."""
        with self._registry_lock:
            return [entry.descriptor for entry in self._entries.values()]

    def get_device(self, device_id: str) -> DeviceDescriptor | None:
        with self._registry_lock:
            entry = self._entries.get(device_id)
            return entry.descriptor if entry else None

    def __contains__(self, device_id: str) -> bool:
        with self._registry_lock:
            return device_id in self._entries

    def add_listener(self, listener: StateListener) -> None:
        self._listeners.append(listener)

    # --- state -----------------------------------------------------------------

    def apply_status_update(
        self,
        device_id: str,
        value: str | NumericValue,
        timestamp: float,
        source: StateSource = StateSource.STATUS_MESSAGE,
    ) -> DeviceState | None:
        """Apply a reported state; returns the new state, or None when dropped.

        Updates older than the current state are dropped (stale). Reports for
        unregistered devices are dropped and counted, never fatal: devices may
        chat on the bus before the catalog knows them.
        """
        with self._registry_lock:
            entry = self._entries.get(device_id)
        if entry is None:
            self.counters.bump("unknown_device_dropped")
            logger.debug("dropping status for unregistered device %r", device_id)
            return None
        if (
            entry.descriptor.is_actuator()
            and isinstance(value, str)
            and value != UNKNOWN_VALUE
            and value not in entry.descriptor.capabilities
        ):
            self.counters.bump("invalid_value_dropped")
            logger.debug("dropping out-of-capability value %r for %r", value, device_id)
            return None
        with entry.lock:
            if timestamp < entry.state.updated_at:
                self.counters.bump("stale_dropped")
                return None
            new_state = DeviceState(device_id, value, timestamp, source)
            if new_state == entry.state:
                return entry.state  # replayed duplicate, nothing to announce
            entry.state = new_state
        self._notify(device_id, new_state)
        return new_state

    def apply_optimistic(self, device_id: str, action: str, timestamp: float | None = None) -> DeviceState | None:
        """Record the state a just-dispatched command should produce.

        The next status message from the device confirms or corrects it.
        """
        return self.apply_status_update(
            device_id,
            action,
            timestamp if timestamp is not None else time.time(),
            source=StateSource.ASSUMED_AFTER_COMMAND,
        )

    def snapshot(self) -> StateSnapshot:
        with self._registry_lock:
            entries = list(self._entries.values())
            states = {}
            for entry in entries:
                with entry.lock:
                    states[entry.descriptor.id] = entry.state
        return StateSnapshot(states=MappingProxyType(states), taken_at=time.time())

    def _notify(self, device_id: str, state: DeviceState) -> None:
        for listener in list(self._listeners):
            try:
                listener(device_id, state)
            except Exception:
                logger.exception("state listener failed for %r", device_id)
