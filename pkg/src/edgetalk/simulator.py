"""Virtual device fleet: each device consumes its command topic and reports status.

A simulated device applies a command after its actuation delay, then
publishes the resulting state. Unsupported actions leave the state unchanged
but still trigger a status publish, so the gateway's optimistic writes get
corrected. Optional fault injection drops commands entirely (no ack, no
status).
"""

import logging
import random
import threading
import time
from dataclasses import dataclass
from queue import Empty, Queue

from .errors import TransportError
from .mqtt import ReconnectingMqttClient
from .registry import DeviceDescriptor, UNKNOWN_VALUE
from .topics import TopicScheme
from .util import wait_until

logger = logging.getLogger(__name__)

DEFAULT_ACTUATION_DELAY = 0.05


@dataclass(frozen=True)
class FaultSpec:
    drop_probability: float = 0.0
    ack_delay_jitter: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must be within [0, 1]")
        if self.ack_delay_jitter < 0:
            raise ValueError("ack_delay_jitter must be >= 0")


@dataclass(frozen=True)
class SimDeviceConfig:
    descriptor: DeviceDescriptor
    actuation_delay: float = DEFAULT_ACTUATION_DELAY
    initial_value: str = UNKNOWN_VALUE
    fault: FaultSpec | None = None

    def __post_init__(self):
        allowed = self.descriptor.capabilities | {UNKNOWN_VALUE}
        if self.initial_value not in allowed:
            raise ValueError(
                f"initial value {self.initial_value!r} not in {sorted(allowed)}"
            )


class SimulatedDevice:
    """One device: an MQTT client, a state variable, and a command worker."""

    def __init__(self, config: SimDeviceConfig, host: str, port: int, rng: random.Random):
        self.config = config
        self.descriptor = config.descriptor
        self._rng = rng
        self._state_lock = threading.Lock()
        self._state = config.initial_value
        self._commands: Queue = Queue()
        self._worker: threading.Thread | None = None
        self._stopping = threading.Event()
        self._client = ReconnectingMqttClient(
            host=host,
            port=port,
            client_id=f"sim-{self.descriptor.id}",
            on_message=self._on_command,
            on_connect=self._on_connect,
            backoff_initial=0.1,
            backoff_max=2.0,
        )
        self._client.subscribe(self.descriptor.command_topic)

    # --- lifecycle --------------------------------------------------------------

    def start(self) -> None:
        self._stopping.clear()
        self._worker = threading.Thread(
            target=self._work_loop, name=f"sim-{self.descriptor.id}", daemon=True
        )
        self._worker.start()
        self._client.start()

    def stop(self) -> None:
        self._stopping.set()
        self._client.stop()
        if self._worker is not None:
            self._worker.join(timeout=2)
            self._worker = None

    def wait_connected(self, timeout: float) -> bool:
        return self._client.wait_connected(timeout)

    # --- state ------------------------------------------------------------------

    @property
    def state(self) -> str:
        with self._state_lock:
            return self._state

    def set_state(self, value: str, publish: bool = True) -> None:
        """Directly set the authoritative state (test/bench hook), then report it."""
        with self._state_lock:
            self._state = value
        if publish:
            self._publish_status()

    # --- internals ----------------------------------------------------------------

    def _on_connect(self, epoch: int) -> None:
        # fresh status on every (re)connect so subscribers resync
        self._publish_status()

    def _on_command(self, topic: str, payload: bytes, receive_ts: float) -> None:
        try:
            action = payload.decode("utf-8").strip()
        except UnicodeDecodeError:
            logger.warning("%s ignoring undecodable command payload", self.descriptor.id)
            return
        self._commands.put(action)

    def _work_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                action = self._commands.get(timeout=0.1)
            except Empty:
                continue
            fault = self.config.fault
            if fault and fault.drop_probability > 0 and self._rng.random() < fault.drop_probability:
                logger.debug("%s dropped command %r (fault injection)", self.descriptor.id, action)
                continue
            delay = self.config.actuation_delay
            if fault and fault.ack_delay_jitter > 0:
                delay += self._rng.random() * fault.ack_delay_jitter
            if delay > 0:
                time.sleep(delay)
            if action in self.descriptor.capabilities:
                with self._state_lock:
                    self._state = action
            else:
                logger.debug("%s rejects unsupported action %r", self.descriptor.id, action)
            # status reflects completed actuation; unsupported actions re-report as-is
            self._publish_status()

    def _publish_status(self) -> None:
        try:
            self._client.publish(self.descriptor.status_topic, self.state.encode("utf-8"))
        except TransportError as exc:
            logger.debug("%s could not publish status: %s", self.descriptor.id, exc)


class DeviceFleet:
    """Start/stop a set of simulated devices and read their ground-truth states."""

    def __init__(
        self,
        configs: list[SimDeviceConfig],
        host: str,
        port: int,
        seed: int | None = None,
    ):
        self.devices: dict[str, SimulatedDevice] = {}
        for index, config in enumerate(configs):
            rng = random.Random(seed + index if seed is not None else None)
            device = SimulatedDevice(config, host, port, rng)
            self.devices[config.descriptor.id] = device

    def start(self, connect_timeout: float = 10.0) -> "DeviceFleet":
        for device in self.devices.values():
            device.start()
        for device in self.devices.values():
            if not device.wait_connected(connect_timeout):
                raise TransportError(f"simulated device {device.descriptor.id} failed to connect")
        return self

    def stop(self) -> None:
        for device in self.devices.values():
            device.stop()

    def __enter__(self) -> "DeviceFleet":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def fleet_state(self) -> dict[str, str]:
        """Authoritative simulated states, bypassing MQTT."""
        return {device_id: device.state for device_id, device in self.devices.items()}

    def apply_states(self, states: dict[str, str]) -> None:
        """Force device states (publishing status), e.g. to reset between bench steps."""
        for device_id, value in states.items():
            self.devices[device_id].set_state(value)

    def wait_for(self, expected: dict[str, str], timeout: float) -> bool:
        return wait_until(
            lambda: all(self.devices[d].state == v for d, v in expected.items()), timeout
        )
