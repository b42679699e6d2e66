"""MQTT 3.1.1 packet encoding/decoding for the subset used here.

Supported packets: CONNECT, CONNACK, PUBLISH (QoS 0/1), PUBACK, SUBSCRIBE,
SUBACK, UNSUBSCRIBE, UNSUBACK, PINGREQ, PINGRESP, DISCONNECT.
"""

import socket
from dataclasses import dataclass, field

CONNECT = 1
CONNACK = 2
PUBLISH = 3
PUBACK = 4
SUBSCRIBE = 8
SUBACK = 9
UNSUBSCRIBE = 10
UNSUBACK = 11
PINGREQ = 12
PINGRESP = 13
DISCONNECT = 14

PROTOCOL_NAME = b"MQTT"
PROTOCOL_LEVEL = 4  # 3.1.1


class CodecError(Exception):
    """Malformed packet bytes."""


class ConnectionClosed(Exception):
    """Peer closed the TCP connection."""


def _encode_string(value: str) -> bytes:
    data = value.encode("utf-8")
    if len(data) > 0xFFFF:
        raise CodecError("string too long for MQTT encoding")
    return len(data).to_bytes(2, "big") + data


def _decode_string(body: bytes, offset: int) -> tuple[str, int]:
    if offset + 2 > len(body):
        raise CodecError("truncated string length")
    length = int.from_bytes(body[offset : offset + 2], "big")
    end = offset + 2 + length
    if end > len(body):
        raise CodecError("truncated string body")
    return body[offset + 2 : end].decode("utf-8"), end


def encode_remaining_length(n: int) -> bytes:
    if n < 0 or n > 268_435_455:
        raise CodecError(f"remaining length {n} out of range")
    out = bytearray()
    while True:
        n, digit = divmod(n, 128)
        out.append(digit | (0x80 if n else 0))
        if not n:
            return bytes(out)


def _frame(packet_type: int, flags: int, body: bytes) -> bytes:
    return bytes([(packet_type << 4) | flags]) + encode_remaining_length(len(body)) + body


# --- outbound encoders --------------------------------------------------------

def encode_connect(client_id: str, keepalive: int = 60, clean_session: bool = True) -> bytes:
    flags = 0x02 if clean_session else 0x00
    body = (
        _encode_string(PROTOCOL_NAME.decode())
        + bytes([PROTOCOL_LEVEL, flags])
        + int(keepalive).to_bytes(2, "big")
        + _encode_string(client_id)
    )
    return _frame(CONNECT, 0, body)


def encode_connack(session_present: bool, return_code: int) -> bytes:
    return _frame(CONNACK, 0, bytes([0x01 if session_present else 0x00, return_code]))


def encode_publish(
    topic: str,
    payload: bytes,
    qos: int = 0,
    packet_id: int | None = None,
    retain: bool = False,
    dup: bool = False,
) -> bytes:
    if qos not in (0, 1):
        raise CodecError(f"unsupported QoS {qos}")
    if qos == 1 and packet_id is None:
        raise CodecError("QoS 1 publish requires a packet id")
    flags = (0x08 if dup else 0) | (qos << 1) | (0x01 if retain else 0)
    body = _encode_string(topic)
    if qos == 1:
        body += packet_id.to_bytes(2, "big")
    body += payload
    return _frame(PUBLISH, flags, body)


def encode_puback(packet_id: int) -> bytes:
    return _frame(PUBACK, 0, packet_id.to_bytes(2, "big"))


def encode_subscribe(packet_id: int, filters: list[tuple[str, int]]) -> bytes:
    body = packet_id.to_bytes(2, "big")
    for topic_filter, qos in filters:
        body += _encode_string(topic_filter) + bytes([qos])
    return _frame(SUBSCRIBE, 0x02, body)


def encode_suback(packet_id: int, return_codes: list[int]) -> bytes:
    return _frame(SUBACK, 0, packet_id.to_bytes(2, "big") + bytes(return_codes))


def encode_unsubscribe(packet_id: int, filters: list[str]) -> bytes:
    body = packet_id.to_bytes(2, "big")
    for topic_filter in filters:
        body += _encode_string(topic_filter)
    return _frame(UNSUBSCRIBE, 0x02, body)


def encode_unsuback(packet_id: int) -> bytes:
    return _frame(UNSUBACK, 0, packet_id.to_bytes(2, "big"))


def encode_pingreq() -> bytes:
    return _frame(PINGREQ, 0, b"")


def encode_pingresp() -> bytes:
    return _frame(PINGRESP, 0, b"")


def encode_disconnect() -> bytes:
    return _frame(DISCONNECT, 0, b"")


# --- inbound parsed packets ---------------------------------------------------

@dataclass(frozen=True)
class Connect:
    client_id: str
    keepalive: int
    clean_session: bool


@dataclass(frozen=True)
class Connack:
    session_present: bool
    return_code: int


@dataclass(frozen=True)
class Publish:
    topic: str
    payload: bytes
    qos: int
    packet_id: int | None
    retain: bool
    dup: bool


@dataclass(frozen=True)
class Puback:
    packet_id: int


@dataclass(frozen=True)
class Subscribe:
    packet_id: int
    filters: tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class Suback:
    packet_id: int
    return_codes: tuple[int, ...]


@dataclass(frozen=True)
class Unsubscribe:
    packet_id: int
    filters: tuple[str, ...]


@dataclass(frozen=True)
class Unsuback:
    packet_id: int


@dataclass(frozen=True)
class Pingreq:
    pass


@dataclass(frozen=True)
class Pingresp:
    pass


@dataclass(frozen=True)
class Disconnect:
    pass


Packet = (
    Connect | Connack | Publish | Puback | Subscribe | Suback
    | Unsubscribe | Unsuback | Pingreq | Pingresp | Disconnect
)


def parse_packet(packet_type: int, flags: int, body: bytes) -> Packet:
    if packet_type == CONNECT:
        name, offset = _decode_string(body, 0)
        if name != "MQTT" or body[offset] != PROTOCOL_LEVEL:
            raise CodecError(f"unsupported protocol {name!r} level {body[offset]}")
        connect_flags = body[offset + 1]
        keepalive = int.from_bytes(body[offset + 2 : offset + 4], "big")
        client_id, _ = _decode_string(body, offset + 4)
        return Connect(client_id, keepalive, bool(connect_flags & 0x02))
    if packet_type == CONNACK:
        return Connack(bool(body[0] & 0x01), body[1])
    if packet_type == PUBLISH:
        qos = (flags >> 1) & 0x03
        if qos not in (0, 1):
            raise CodecError(f"unsupported inbound QoS {qos}")
        topic, offset = _decode_string(body, 0)
        packet_id = None
        if qos == 1:
            packet_id = int.from_bytes(body[offset : offset + 2], "big")
            offset += 2
        return Publish(topic, body[offset:], qos, packet_id, bool(flags & 0x01), bool(flags & 0x08))
    if packet_type == PUBACK:
        return Puback(int.from_bytes(body[:2], "big"))
    if packet_type == SUBSCRIBE:
        packet_id = int.from_bytes(body[:2], "big")
        offset = 2
        filters: list[tuple[str, int]] = []
        while offset < len(body):
            topic_filter, offset = _decode_string(body, offset)
            filters.append((topic_filter, body[offset]))
            offset += 1
        return Subscribe(packet_id, tuple(filters))
    if packet_type == SUBACK:
        return Suback(int.from_bytes(body[:2], "big"), tuple(body[2:]))
    if packet_type == UNSUBSCRIBE:
        packet_id = int.from_bytes(body[:2], "big")
        offset = 2
        names: list[str] = []
        while offset < len(body):
            topic_filter, offset = _decode_string(body, offset)
            names.append(topic_filter)
        return Unsubscribe(packet_id, tuple(names))
    if packet_type == UNSUBACK:
        return Unsuback(int.from_bytes(body[:2], "big"))
    if packet_type == PINGREQ:
        return Pingreq()
    if packet_type == PINGRESP:
        return Pingresp()
    if packet_type == DISCONNECT:
        return Disconnect()
    raise CodecError(f"unsupported packet type {packet_type}")


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = bytearray()
    while len(chunks) < n:
        chunk = sock.recv(n - len(chunks))
        if not chunk:
            raise ConnectionClosed("socket closed mid-packet")
        chunks.extend(chunk)
    return bytes(chunks)


def read_packet(sock: socket.socket) -> Packet:
    """Blocking read of one full packet from a socket."""
    first = sock.recv(1)
    if not first:
        raise ConnectionClosed("socket closed")
    packet_type, flags = first[0] >> 4, first[0] & 0x0F
    remaining = 0
    for shift in range(0, 28, 7):
        byte = _recv_exact(sock, 1)[0]
        remaining |= (byte & 0x7F) << shift
        if not byte & 0x80:
            break
    else:
        raise CodecError("remaining length exceeds 4 bytes")
    body = _recv_exact(sock, remaining) if remaining else b""
    return parse_packet(packet_type, flags, body)


def topic_matches(topic_filter: str, topic: str) -> bool:
    """MQTT filter match: '+' spans one level, '#' the remainder."""
    filter_parts = topic_filter.split("/")
    topic_parts = topic.split("/")
    for i, part in enumerate(filter_parts):
        if part == "#":
            return True
        if i >= len(topic_parts):
            return False
        if part != "+" and part != topic_parts[i]:
            return False
    return len(filter_parts) == len(topic_parts)
