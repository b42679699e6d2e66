"""MQTT connectivity for the gateway: status subscription, command publishing.

Owns payload encoding/decoding and the offline command queue. Commands are
published as bare lowercase action strings; status payloads may be either a
bare string ("on") or a JSON object {"value": ..., "ts": ...} for devices
that report richer data.
"""

import json
import logging
import threading
from dataclasses import dataclass
from typing import Callable

from .errors import BackpressureError, TransportError, UndecodablePayloadError
from .mqtt import ReconnectingMqttClient
from .registry import DeviceDescriptor
from .topics import Direction, TopicScheme
from .util import Counters

logger = logging.getLogger(__name__)

DEFAULT_OFFLINE_QUEUE = 64

# on_status(device_id, raw_payload, receive_timestamp)
StatusCallback = Callable[[str, bytes, float], None]


@dataclass(frozen=True)
class BrokerConfig:
    host: str = "127.0.0.1"
    port: int = 1883
    client_id: str = "edgetalk-gateway"
    keepalive_seconds: int = 30
    qos_level: int = 1
    reconnect_initial_seconds: float = 0.5
    reconnect_max_seconds: float = 8.0

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port {self.port} out of range")
        if self.qos_level not in (0, 1):
            raise ValueError("qos_level must be 0 or 1")
        if self.reconnect_initial_seconds > self.reconnect_max_seconds:
            raise ValueError("reconnect initial delay must be <= max delay")


def decode_status_payload(payload: bytes) -> tuple[str, float | None]:
    """Decode a status payload to (value string, optional device timestamp)."""
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise UndecodablePayloadError("status payload is not UTF-8") from exc
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(stripped)
        except json.JSONDecodeError:
            return stripped, None
        if isinstance(doc, dict) and "value" in doc:
            ts = doc.get("ts")
            return str(doc["value"]), float(ts) if isinstance(ts, (int, float)) else None
    return stripped, None


def encode_command_payload(action: str) -> bytes:
    return action.encode("utf-8")


class MqttTransport:
    """Gateway-side MQTT endpoint with reconnect and a bounded offline queue."""

    def __init__(
        self,
        config: BrokerConfig,
        scheme: TopicScheme | None = None,
        on_status: StatusCallback | None = None,
        offline_queue_size: int = DEFAULT_OFFLINE_QUEUE,
    ):
        self.config = config
        self.scheme = scheme or TopicScheme()
        self.on_status = on_status
        self.offline_queue_size = offline_queue_size
        self.counters = Counters()
        self._queue_lock = threading.Lock()
        self._offline_queue: list[tuple[str, bytes]] = []
        self._client = ReconnectingMqttClient(
            host=config.host,
            port=config.port,
            client_id=config.client_id,
            keepalive=config.keepalive_seconds,
            on_message=self._handle_message,
            on_connect=self._handle_connect,
            backoff_initial=config.reconnect_initial_seconds,
            backoff_max=config.reconnect_max_seconds,
            qos=config.qos_level,
        )

    # --- lifecycle --------------------------------------------------------------

    def start(self) -> "MqttTransport":
        self._client.start()
        return self

    def stop(self) -> None:
        self._client.stop()

    def wait_connected(self, timeout: float) -> bool:
        return self._client.wait_connected(timeout)

    @property
    def connected(self) -> bool:
        return self._client.connected

    @property
    def epoch(self) -> int:
        return self._client.epoch

    def health(self) -> dict:
        if self._client.connected:
            return {"state": "connected", "epoch": self._client.epoch}
        return {
            "state": "degraded",
            "epoch": self._client.epoch,
            "detail": self._client.last_error or "connecting",
            "queued_commands": len(self._offline_queue),
        }

    # --- subscriptions -------------------------------------------------------------

    def subscribe_all(self, devices: list[DeviceDescriptor]) -> None:
        """Subscribe to every device's status topic via the scheme-wide filter.

        The wildcard also surfaces messages from devices that are not (yet)
        registered; the registry drops those by its own rule.
        """
        logger.info(
            "subscribing to %s for %d registered devices",
            self.scheme.status_filter(),
            len(devices),
        )
        self._client.subscribe(self.scheme.status_filter())

    # --- publishing ------------------------------------------------------------------

    def publish_command(self, device_id: str, action: str) -> None:
        """Publish the action to the device's command topic; queue while offline.

        Raises BackpressureError once the bounded offline queue is full.
        """
        if not action:
            raise ValueError("action must be non-empty")
        topic = self.scheme.command_topic(device_id)
        payload = encode_command_payload(action)
        if self._client.connected:
            try:
                self._client.publish(topic, payload)
                return
            except TransportError:
                pass  # lost the connection mid-publish; fall through to the queue
        self._enqueue(topic, payload)

    def _enqueue(self, topic: str, payload: bytes) -> None:
        with self._queue_lock:
            if len(self._offline_queue) >= self.offline_queue_size:
                self.counters.bump("commands_rejected_backpressure")
                raise BackpressureError(
                    f"offline queue full ({self.offline_queue_size}); command dropped"
                )
            self._offline_queue.append((topic, payload))
            self.counters.bump("commands_queued_offline")

    # --- callbacks ---------------------------------------------------------------------

    def _handle_connect(self, epoch: int) -> None:
        with self._queue_lock:
            backlog = list(self._offline_queue)
            self._offline_queue.clear()
        for topic, payload in backlog:
            try:
                self._client.publish(topic, payload)
            except TransportError as exc:
                logger.warning("replaying queued command to %s failed: %s", topic, exc)
                self._enqueue(topic, payload)

    def _handle_message(self, topic: str, payload: bytes, receive_ts: float) -> None:
        try:
            device_id, direction = self.scheme.parse(topic)
        except Exception:
            self.counters.bump("unparseable_topic")
            return
        if direction is not Direction.STATUS:
            return
        if self.on_status is not None:
            self.on_status(device_id, payload, receive_ts)
