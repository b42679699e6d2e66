"""Threaded development MQTT broker.

Routes QoS 0/1 publishes between connected clients with '+'/'#' filter
matching and optional retained messages. Intended for tests, benchmarks, and
local demos; production deployments point the gateway at a real broker.
"""

import logging
import socket
import threading

from . import codec

logger = logging.getLogger(__name__)


class _ClientSession:
    def __init__(self, sock: socket.socket, address):
        self.sock = sock
        self.address = address
        self.client_id = ""
        self.subscriptions: list[tuple[str, int]] = []
        self.send_lock = threading.Lock()
        self.alive = True

    def send(self, data: bytes) -> None:
        with self.send_lock:
            self.sock.sendall(data)

    def close(self) -> None:
        self.alive = False
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class DevBroker:
    """Minimal MQTT 3.1.1 broker bound to a TCP port (0 picks an ephemeral one)."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.host = host
        self._requested_port = port
        self.port = port
        self._server_sock: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._clients: dict[int, _ClientSession] = {}
        self._clients_lock = threading.Lock()
        self._retained: dict[str, bytes] = {}
        self._next_packet_id = 1
        self._running = False

    # --- lifecycle -----------------------------------------------------------

    def start(self) -> "DevBroker":
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, self._requested_port))
        sock.listen(32)
        self._server_sock = sock
        self.port = sock.getsockname()[1]
        self._running = True
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="devbroker-accept", daemon=True
        )
        self._accept_thread.start()
        logger.info("dev broker listening on %s:%d", self.host, self.port)
        return self

    def stop(self) -> None:
        self._running = False
        if self._server_sock is not None:
            # shutdown() unblocks the accept() thread; close() alone does not
            try:
                self._server_sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._server_sock.close()
            except OSError:
                pass
            self._server_sock = None
        with self._clients_lock:
            sessions = list(self._clients.values())
            self._clients.clear()
        for session in sessions:
            session.close()
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2)
            self._accept_thread = None

    def __enter__(self) -> "DevBroker":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    # --- test helpers ----------------------------------------------------------

    def connected_client_ids(self) -> list[str]:
        with self._clients_lock:
            return [s.client_id for s in self._clients.values()]

    def drop_client(self, client_id: str) -> bool:
        """Forcibly close a client's connection (for reconnect tests)."""
        with self._clients_lock:
            targets = [s for s in self._clients.values() if s.client_id == client_id]
        for session in targets:
            session.close()
        return bool(targets)

    # --- internals -------------------------------------------------------------

    def _accept_loop(self) -> None:
        while self._running:
            try:
                client_sock, address = self._server_sock.accept()
            except OSError:
                return
            client_sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            session = _ClientSession(client_sock, address)
            with self._clients_lock:
                self._clients[id(session)] = session
            threading.Thread(
                target=self._serve_client, args=(session,), name="devbroker-client", daemon=True
            ).start()

    def _serve_client(self, session: _ClientSession) -> None:
        try:
            packet = codec.read_packet(session.sock)
            if not isinstance(packet, codec.Connect):
                return
            session.client_id = packet.client_id
            session.send(codec.encode_connack(session_present=False, return_code=0))
            while session.alive:
                packet = codec.read_packet(session.sock)
                self._handle_packet(session, packet)
        except (codec.ConnectionClosed, codec.CodecError, OSError):
            pass
        finally:
            with self._clients_lock:
                self._clients.pop(id(session), None)
            session.close()

    def _handle_packet(self, session: _ClientSession, packet: codec.Packet) -> None:
        if isinstance(packet, codec.Publish):
            if packet.qos == 1:
                session.send(codec.encode_puback(packet.packet_id))
            if packet.retain:
                if packet.payload:
                    self._retained[packet.topic] = packet.payload
                else:
                    self._retained.pop(packet.topic, None)
            self._route(packet.topic, packet.payload, packet.qos)
        elif isinstance(packet, codec.Subscribe):
            granted = []
            for topic_filter, qos in packet.filters:
                granted_qos = min(qos, 1)
                session.subscriptions.append((topic_filter, granted_qos))
                granted.append(granted_qos)
            session.send(codec.encode_suback(packet.packet_id, granted))
            for topic_filter, qos in packet.filters:
                for topic, payload in list(self._retained.items()):
                    if codec.topic_matches(topic_filter, topic):
                        self._deliver(session, topic, payload, min(qos, 1), retain=True)
        elif isinstance(packet, codec.Unsubscribe):
            session.subscriptions = [
                (f, q) for f, q in session.subscriptions if f not in packet.filters
            ]
            session.send(codec.encode_unsuback(packet.packet_id))
        elif isinstance(packet, codec.Pingreq):
            session.send(codec.encode_pingresp())
        elif isinstance(packet, codec.Disconnect):
            session.alive = False

    def _route(self, topic: str, payload: bytes, publish_qos: int) -> None:
        with self._clients_lock:
            sessions = list(self._clients.values())
        for session in sessions:
            for topic_filter, granted_qos in session.subscriptions:
                if codec.topic_matches(topic_filter, topic):
                    self._deliver(session, topic, payload, min(publish_qos, granted_qos))
                    break

    def _deliver(
        self, session: _ClientSession, topic: str, payload: bytes, qos: int, retain: bool = False
    ) -> None:
        packet_id = None
        if qos == 1:
            packet_id = self._next_packet_id
            self._next_packet_id = self._next_packet_id % 0xFFFF + 1
        try:
            session.send(codec.encode_publish(topic, payload, qos, packet_id, retain=retain))
        except OSError:
            session.close()
