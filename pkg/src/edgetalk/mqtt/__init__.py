"""Minimal MQTT 3.1.1 implementation: wire codec, threaded client, dev broker.

No MQTT client library is assumed on the host; this subpackage speaks the
subset of MQTT 3.1.1 the gateway and simulator need (CONNECT/CONNACK,
PUBLISH/PUBACK at QoS 0/1, SUBSCRIBE/SUBACK, PING, DISCONNECT) over plain TCP.
The broker here is a development/test broker; any standard MQTT broker works
in its place.
"""

from .broker import DevBroker
from .client import MqttClient, ReconnectingMqttClient

__all__ = ["DevBroker", "MqttClient", "ReconnectingMqttClient"]
