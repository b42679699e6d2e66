"""Threaded MQTT 3.1.1 client with an optional auto-reconnect supervisor."""

import logging
import socket
import threading
import time
from typing import Callable

from ..errors import TransportError
from . import codec

logger = logging.getLogger(__name__)

# on_message(topic, payload, receive_timestamp)
MessageCallback = Callable[[str, bytes, float], None]


class MqttClient:
    """One MQTT connection. Reader and keepalive run on daemon threads."""

    def __init__(
        self,
        host: str,
        port: int,
        client_id: str,
        keepalive: int = 60,
        on_message: MessageCallback | None = None,
        on_disconnect: Callable[[], None] | None = None,
        ack_timeout: float = 5.0,
    ):
        self.host = host
        self.port = port
        self.client_id = client_id
        self.keepalive = keepalive
        self.on_message = on_message
        self.on_disconnect = on_disconnect
        self.ack_timeout = ack_timeout
        self._sock: socket.socket | None = None
        self._send_lock = threading.Lock()
        self._pid_lock = threading.Lock()
        self._next_pid = 1
        self._pending_acks: dict[int, threading.Event] = {}
        self._suback_codes: dict[int, tuple[int, ...]] = {}
        self._reader: threading.Thread | None = None
        self._pinger: threading.Thread | None = None
        self._closing = False
        self.connected = False

    def connect(self, timeout: float = 5.0) -> None:
        try:
            sock = socket.create_connection((self.host, self.port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"broker unreachable at {self.host}:{self.port}: {exc}") from exc
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        try:
            sock.sendall(codec.encode_connect(self.client_id, self.keepalive))
            packet = codec.read_packet(sock)
        except (OSError, codec.ConnectionClosed, codec.CodecError) as exc:
            sock.close()
            raise TransportError(f"MQTT connect failed: {exc}") from exc
        if not isinstance(packet, codec.Connack) or packet.return_code != 0:
            sock.close()
            raise TransportError(f"broker refused connection: {packet!r}")
        sock.settimeout(None)
        self._sock = sock
        self._closing = False
        self.connected = True
        self._reader = threading.Thread(target=self._read_loop, name="mqtt-reader", daemon=True)
        self._reader.start()
        if self.keepalive > 0:
            self._pinger = threading.Thread(target=self._ping_loop, name="mqtt-ping", daemon=True)
            self._pinger.start()

    def close(self) -> None:
        self._closing = True
        sock = self._sock
        if sock is not None:
            try:
                with self._send_lock:
                    sock.sendall(codec.encode_disconnect())
            except OSError:
                pass
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()
        self.connected = False

    def subscribe(self, filters: list[tuple[str, int]]) -> None:
        pid = self._allocate_pid()
        done = threading.Event()
        self._pending_acks[pid] = done
        self._send(codec.encode_subscribe(pid, filters))
        if not done.wait(self.ack_timeout):
            self._pending_acks.pop(pid, None)
            raise TransportError(f"SUBACK timeout for {filters}")
        codes = self._suback_codes.pop(pid, ())
        if any(code == 0x80 for code in codes):
            raise TransportError(f"broker rejected subscription: {filters} -> {codes}")

    def publish(self, topic: str, payload: bytes, qos: int = 0, retain: bool = False) -> None:
        if qos == 0:
            self._send(codec.encode_publish(topic, payload, 0, retain=retain))
            return
        pid = self._allocate_pid()
        done = threading.Event()
        self._pending_acks[pid] = done
        self._send(codec.encode_publish(topic, payload, 1, pid, retain=retain))
        if not done.wait(self.ack_timeout):
            self._pending_acks.pop(pid, None)
            raise TransportError(f"PUBACK timeout publishing to {topic!r}")

    # --- internals -------------------------------------------------------------

    def _allocate_pid(self) -> int:
        with self._pid_lock:
            pid = self._next_pid
            self._next_pid = self._next_pid % 0xFFFF + 1
            return pid

    def _send(self, data: bytes) -> None:
        sock = self._sock
        if sock is None or not self.connected:
            raise TransportError("not connected")
        try:
            with self._send_lock:
                sock.sendall(data)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def _read_loop(self) -> None:
        try:
            while True:
                packet = codec.read_packet(self._sock)
                if isinstance(packet, codec.Publish):
                    if packet.qos == 1 and packet.packet_id is not None:
                        self._send(codec.encode_puback(packet.packet_id))
                    if self.on_message is not None:
                        try:
                            self.on_message(packet.topic, packet.payload, time.time())
                        except Exception:
                            logger.exception("on_message callback failed")
                elif isinstance(packet, codec.Puback):
                    event = self._pending_acks.pop(packet.packet_id, None)
                    if event is not None:
                        event.set()
                elif isinstance(packet, codec.Suback):
                    self._suback_codes[packet.packet_id] = packet.return_codes
                    event = self._pending_acks.pop(packet.packet_id, None)
                    if event is not None:
                        event.set()
                elif isinstance(packet, codec.Unsuback):
                    event = self._pending_acks.pop(packet.packet_id, None)
                    if event is not None:
                        event.set()
                # PINGRESP needs no action
        except (codec.ConnectionClosed, codec.CodecError, OSError, TransportError):
            pass
        finally:
            was_connected = self.connected
            self.connected = False
            for event in list(self._pending_acks.values()):
                event.set()
            self._pending_acks.clear()
            if was_connected and not self._closing and self.on_disconnect is not None:
                self.on_disconnect()

    def _ping_loop(self) -> None:
        interval = max(self.keepalive / 2.0, 1.0)
        while self.connected and not self._closing:
            time.sleep(interval)
            if not self.connected or self._closing:
                return
            try:
                self._send(codec.encode_pingreq())
            except TransportError:
                return


class ReconnectingMqttClient:
    """Supervises an MqttClient: bounded exponential backoff, resubscribe on connect.

    `on_connect(epoch)` runs after each successful (re)connect, once desired
    subscriptions are re-established. Connection state is exposed for health
    reporting.
    """

    def __init__(
        self,
        host: str,
        port: int,
        client_id: str,
        keepalive: int = 60,
        on_message: MessageCallback | None = None,
        on_connect: Callable[[int], None] | None = None,
        backoff_initial: float = 0.5,
        backoff_max: float = 8.0,
        qos: int = 1,
    ):
        self.host = host
        self.port = port
        self.client_id = client_id
        self.keepalive = keepalive
        self.on_message = on_message
        self.on_connect = on_connect
        self.backoff_initial = backoff_initial
        self.backoff_max = backoff_max
        self.qos = qos
        self.epoch = 0
        self._desired_filters: list[str] = []
        self._client: MqttClient | None = None
        self._lock = threading.RLock()
        self._stopped = threading.Event()
        self._reconnect_wakeup = threading.Event()
        self._supervisor: threading.Thread | None = None
        self._connected_event = threading.Event()
        self.last_error: str | None = None

    @property
    def connected(self) -> bool:
        client = self._client
        return client is not None and client.connected

    def start(self) -> "ReconnectingMqttClient":
        self._stopped.clear()
        self._supervisor = threading.Thread(
            target=self._supervise, name=f"mqtt-supervisor-{self.client_id}", daemon=True
        )
        self._supervisor.start()
        return self

    def stop(self) -> None:
        self._stopped.set()
        self._reconnect_wakeup.set()
        with self._lock:
            client = self._client
            self._client = None
        if client is not None:
            client.close()
        if self._supervisor is not None:
            self._supervisor.join(timeout=3)
            self._supervisor = None

    def wait_connected(self, timeout: float) -> bool:
        return self._connected_event.wait(timeout)

    def subscribe(self, topic_filter: str) -> None:
        """Register a desired subscription; applied now and after every reconnect."""
        with self._lock:
            if topic_filter not in self._desired_filters:
                self._desired_filters.append(topic_filter)
            client = self._client
        if client is not None and client.connected:
            client.subscribe([(topic_filter, self.qos)])

    def publish(self, topic: str, payload: bytes, retain: bool = False) -> None:
        with self._lock:
            client = self._client
        if client is None or not client.connected:
            raise TransportError("not connected")
        client.publish(topic, payload, qos=self.qos, retain=retain)

    # --- internals -------------------------------------------------------------

    def _supervise(self) -> None:
        backoff = self.backoff_initial
        while not self._stopped.is_set():
            disconnected = threading.Event()
            client = MqttClient(
                self.host,
                self.port,
                self.client_id,
                keepalive=self.keepalive,
                on_message=self.on_message,
                on_disconnect=disconnected.set,
            )
            try:
                client.connect()
            except TransportError as exc:
                self.last_error = str(exc)
                logger.debug("connect attempt failed for %s: %s", self.client_id, exc)
                if self._stopped.wait(backoff):
                    return
                backoff = min(backoff * 2, self.backoff_max)
                continue
            backoff = self.backoff_initial
            self.epoch += 1
            with self._lock:
                self._client = client
                filters = list(self._desired_filters)
            try:
                if filters:
                    client.subscribe([(f, self.qos) for f in filters])
                if self.on_connect is not None:
                    self.on_connect(self.epoch)
            except TransportError as exc:
                self.last_error = str(exc)
                client.close()
                continue
            self.last_error = None
            self._connected_event.set()
            while not disconnected.wait(0.2):
                if self._stopped.is_set():
                    break
            self._connected_event.clear()
            with self._lock:
                self._client = None
            client.close()
        logger.debug("supervisor for %s stopped", self.client_id)
