"""Pipeline orchestration: end-to-end flows, short-circuits, events, restart."""

import threading
import time
import uuid

import pytest

from edgetalk.backend import BackendConfig, ScriptEntry, ScriptedBackend, bundled_script_path
from edgetalk.errors import ConfigError, SessionQueueFullError, TraceNotFoundError
from edgetalk.gateway import Gateway, GatewayConfig, TraceStatus, load_config
from edgetalk.mqtt import MqttClient
from edgetalk.reconcile import Decision
from edgetalk.registry import DeviceDescriptor, DeviceKind
from edgetalk.simulator import DeviceFleet, SimDeviceConfig
from edgetalk.topics import TopicScheme
from edgetalk.transport import BrokerConfig
from edgetalk.util import wait_until

SCHEME = TopicScheme()
DEVICE_KINDS = {"light": DeviceKind.LIGHT, "tv": DeviceKind.TV, "fan": DeviceKind.FAN}


def descriptors():
    return [
        DeviceDescriptor.from_scheme(device_id, kind, {"on", "off"}, SCHEME)
        for device_id, kind in DEVICE_KINDS.items()
    ]


def gateway_config(tmp_path, broker_port, **overrides):
    fields = dict(
        broker=BrokerConfig(
            port=broker_port,
            client_id=f"gw-{uuid.uuid4().hex[:6]}",
            reconnect_initial_seconds=0.05,
            reconnect_max_seconds=0.5,
        ),
        devices=descriptors(),
        backend=BackendConfig(kind="scripted", script_path=str(bundled_script_path("llama3"))),
        history_path=str(tmp_path / "history.jsonl"),
    )
    fields.update(overrides)
    return GatewayConfig(**fields)


def start_fleet(broker, initial):
    configs = [
        SimDeviceConfig(
            DeviceDescriptor.from_scheme(d, DEVICE_KINDS[d], {"on", "off"}, SCHEME),
            actuation_delay=0.02,
            initial_value=value,
        )
        for d, value in initial.items()
    ]
    return DeviceFleet(configs, broker.host, broker.port).start()


def wait_registry(gateway, expected, timeout=5):
    assert wait_until(
        lambda: gateway.registry.snapshot().value_map() == expected, timeout
    ), f"registry never reached {expected}: {gateway.registry.snapshot().value_map()}"


@pytest.fixture
def sleep_stack(broker, tmp_path):
    """Gateway + fleet at the transcript's starting point: light on, tv on, fan off.

    The gateway subscribes before the fleet boots so the devices' initial
    status announcements land in the registry (no retained messages).
    """
    gateway = Gateway(gateway_config(tmp_path, broker.port)).start()
    assert gateway.transport.wait_connected(5)
    fleet = start_fleet(broker, {"light": "on", "tv": "on", "fan": "off"})
    wait_registry(gateway, {"light": "on", "tv": "on", "fan": "off"})
    yield gateway, fleet
    gateway.stop()
    fleet.stop()


def test_sleep_command_end_to_end(sleep_stack, broker):
    gateway, fleet = sleep_stack
    commands_seen = []
    spy = MqttClient(broker.host, broker.port, "spy", on_message=lambda t, p, ts: commands_seen.append((t, p)))
    spy.connect()
    spy.subscribe([("home/+/command", 1)])

    trace = gateway.submit_command("s1", "I want to sleep now")

    assert trace.status is TraceStatus.OK
    assert [e.decision for e in trace.plan.entries] == [
        Decision.SKIP_UNSUPPORTED,
        Decision.ACT,
        Decision.SKIP_SAME,
    ]
    assert trace.dispatch_report.sent_count() == 1
    assert wait_until(lambda: commands_seen == [("home/tv/command", b"off")], timeout=2)
    assert fleet.wait_for({"light": "on", "tv": "off", "fan": "off"}, timeout=2)
    spy.close()


def test_resubmit_after_convergence_is_idempotent(sleep_stack):
    gateway, fleet = sleep_stack
    first = gateway.submit_command("s1", "I want to sleep now")
    assert first.dispatch_report.sent_count() == 1
    assert fleet.wait_for({"tv": "off"}, timeout=2)
    wait_registry(gateway, {"light": "on", "tv": "off", "fan": "off"})

    second = gateway.submit_command("s1", "I want to sleep now")
    assert second.plan.act_entries() == []
    assert second.dispatch_report.sent_count() == 0


def test_semantic_misses_still_dispatch(broker, tmp_path):
    """The gateway has no intent oracle: it executes whatever parsed."""
    config = gateway_config(
        tmp_path,
        broker.port,
        backend=BackendConfig(kind="scripted", script_path=str(bundled_script_path("gemma2b"))),
    )
    gateway = Gateway(config).start()
    assert gateway.transport.wait_connected(5)
    fleet = start_fleet(broker, {"light": "off", "tv": "off", "fan": "off"})
    try:
        wait_registry(gateway, {"light": "off", "tv": "off", "fan": "off"})
        trace = gateway.submit_command("s1", "Set the room for movie night")
        assert trace.status is TraceStatus.OK
        # the script says tv off: already off, so only light and fan act
        assert {(e.device_id, e.desired) for e in trace.plan.act_entries()} == {
            ("light", "on"),
            ("fan", "on"),
        }
        assert fleet.wait_for({"light": "on", "fan": "on", "tv": "off"}, timeout=2)
    finally:
        gateway.stop()
        fleet.stop()


# --- short-circuits (no broker needed) ---------------------------------------------

class SpyBackend:
    def __init__(self, raw_text="x"):
        self.calls = 0
        self.raw_text = raw_text

    def generate(self, prompt):
        self.calls += 1
        from edgetalk.backend import InferenceResult

        return InferenceResult(raw_text=self.raw_text, latency=0.0, backend_id="spy")


@pytest.fixture
def offline_gateway(tmp_path):
    """Gateway with no broker: pipeline still runs, dispatch queues offline."""
    spy = SpyBackend('{"description": "d", "commands": [{"device": "tv", "action": "off"}]}')
    gateway = Gateway(gateway_config(tmp_path, broker_port=1), backend=spy)
    yield gateway, spy
    gateway.log.close()


def test_control_character_rejected_before_backend(offline_gateway):
    gateway, spy = offline_gateway
    trace = gateway.submit_command("s1", "sleep\x07now")
    assert trace.status is TraceStatus.REJECTED_INPUT
    assert spy.calls == 0
    assert trace.prompt is None


def test_backend_error_short_circuits(tmp_path):
    backend = ScriptedBackend([ScriptEntry("known", "resp")])
    gateway = Gateway(gateway_config(tmp_path, broker_port=1), backend=backend)
    trace = gateway.submit_command("s1", "unknown command")
    assert trace.status is TraceStatus.BACKEND_ERROR
    assert trace.prompt is not None
    assert trace.result is None
    assert "no script entry" in trace.error
    gateway.log.close()


def test_parse_error_short_circuits(tmp_path):
    spy = SpyBackend("no json here, sorry")
    gateway = Gateway(gateway_config(tmp_path, broker_port=1), backend=spy)
    trace = gateway.submit_command("s1", "do something")
    assert trace.status is TraceStatus.PARSE_ERROR
    assert trace.result is not None
    assert trace.plan is None
    gateway.log.close()


def test_partial_trace_is_persisted_on_failure(tmp_path):
    spy = SpyBackend("garbage")
    gateway = Gateway(gateway_config(tmp_path, broker_port=1), backend=spy)
    trace = gateway.submit_command("s1", "do something")
    assert trace.inference_seq is not None
    gateway.log.close()


def test_timing_additivity_and_stage_order(offline_gateway):
    gateway, _ = offline_gateway
    trace = gateway.submit_command("s1", "turn off the tv")
    stage_sum = sum(trace.timings.values())
    assert stage_sum <= trace.total_seconds <= stage_sum + 0.1
    starts = trace.stage_starts
    assert starts["prompt_build"] <= starts["inference"] <= starts["parse"] <= starts["dispatch"]
    assert trace.timings["inference"] == trace.result.latency


# --- reads -----------------------------------------------------------------------

def test_trace_reads(offline_gateway):
    gateway, _ = offline_gateway
    trace = gateway.submit_command("s1", "turn off the tv")
    assert gateway.get_trace(trace.trace_id).trace_id == trace.trace_id
    assert [t.trace_id for t in gateway.list_traces("s1")] == [trace.trace_id]
    gateway.submit_command("s1", "turn off the tv")
    listed = gateway.list_traces("s1")
    assert len(listed) == 2
    assert listed[0].created_at >= listed[1].created_at  # reverse chronological
    with pytest.raises(TraceNotFoundError):
        gateway.get_trace("nope")


def test_get_devices_reflects_config(offline_gateway):
    gateway, _ = offline_gateway
    devices = gateway.get_devices()
    assert [d["id"] for d in devices] == ["light", "tv", "fan"]
    assert all(d["value"] == "unknown" for d in devices)
    assert devices[0]["capabilities"] == ["off", "on"]


# --- push channel -------------------------------------------------------------------

def test_state_stream_sees_simulator_flip(sleep_stack, broker):
    gateway, fleet = sleep_stack
    subscription = gateway.state_stream()
    fleet.apply_states({"light": "off"})
    event = subscription.get(timeout=3)
    while event is not None and not (
        event["type"] == "device_state" and event["device_id"] == "light"
    ):
        event = subscription.get(timeout=3)
    assert event is not None
    assert event["value"] == "off"
    gateway.bus.unsubscribe(subscription)


def test_trace_lifecycle_events_in_order(offline_gateway):
    gateway, _ = offline_gateway
    subscription = gateway.state_stream()
    gateway.submit_command("s1", "turn off the tv")
    phases = []
    event = subscription.get(timeout=2)
    while event is not None:
        if event["type"] == "trace":
            phases.append(event["phase"])
        if len(phases) == 2:
            break
        event = subscription.get(timeout=2)
    assert phases == ["started", "finished"]
    gateway.bus.unsubscribe(subscription)


def test_two_subscribers_see_identical_sequences(offline_gateway):
    gateway, _ = offline_gateway
    sub_a = gateway.state_stream()
    sub_b = gateway.state_stream()
    gateway.submit_command("s1", "turn off the tv")

    def drain(sub):
        events = []
        while True:
            event = sub.get(timeout=0.5)
            if event is None:
                return events
            events.append(event)
            if len(events) >= 3:
                return events

    assert drain(sub_a) == drain(sub_b)
    gateway.bus.unsubscribe(sub_a)
    gateway.bus.unsubscribe(sub_b)


# --- sessions --------------------------------------------------------------------------

def test_session_queue_depth_enforced(tmp_path):
    slow = ScriptedBackend(
        [ScriptEntry("slow one", '{"description": "d", "commands": []}', delay_seconds=0.4)]
    )
    gateway = Gateway(gateway_config(tmp_path, broker_port=1), backend=slow)
    results = []
    errors = []

    def submit():
        try:
            results.append(gateway.submit_command("s1", "slow one"))
        except SessionQueueFullError as exc:
            errors.append(exc)

    threads = [threading.Thread(target=submit) for _ in range(6)]
    for t in threads:
        t.start()
        time.sleep(0.02)  # deterministic arrival order: 1 active + 4 queued + 1 rejected
    for t in threads:
        t.join()
    assert len(errors) == 1
    assert len(results) == 5
    gateway.log.close()


def test_sessions_do_not_block_each_other(tmp_path):
    slow = ScriptedBackend(
        [ScriptEntry("slow one", '{"description": "d", "commands": []}', delay_seconds=0.3)]
    )
    gateway = Gateway(gateway_config(tmp_path, broker_port=1), backend=slow)
    started = time.monotonic()
    threads = [
        threading.Thread(target=gateway.submit_command, args=(f"s{i}", "slow one"))
        for i in range(3)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    # distinct sessions run concurrently, so total stays near one delay, not three
    assert time.monotonic() - started < 0.8
    gateway.log.close()


# --- restart ------------------------------------------------------------------------------

def test_restart_restores_traces_and_states(broker, tmp_path):
    config = gateway_config(tmp_path, broker.port)
    gateway = Gateway(config).start()
    assert gateway.transport.wait_connected(5)
    fleet = start_fleet(broker, {"light": "on", "tv": "on", "fan": "off"})
    wait_registry(gateway, {"light": "on", "tv": "on", "fan": "off"})
    gateway.submit_command("s1", "I want to sleep now")
    assert fleet.wait_for({"tv": "off"}, timeout=2)
    wait_registry(gateway, {"light": "on", "tv": "off", "fan": "off"})

    pre_traces = [t.to_dict() for t in gateway.list_traces()]
    pre_states = gateway.registry.snapshot().value_map()
    gateway.stop()
    fleet.stop()

    revived = Gateway(gateway_config(tmp_path, broker_port=1, history_path=config.history_path))
    revived.restore_from_history()
    assert [t.to_dict() for t in revived.list_traces()] == pre_traces
    assert revived.registry.snapshot().value_map() == pre_states
    revived.log.close()


# --- config loading --------------------------------------------------------------------

def test_load_config_roundtrip(tmp_path):
    doc = {
        "broker": {"host": "127.0.0.1", "port": 1883},
        "devices": [
            {"id": "light", "kind": "light", "capabilities": ["on", "off"]},
            {"id": "tv", "kind": "tv", "capabilities": ["on", "off"]},
        ],
        "backend": {"kind": "scripted", "script_path": str(bundled_script_path("llama3"))},
        "history_path": str(tmp_path / "h.jsonl"),
        "prompt": {"include_history": True, "history_limit": 2},
        "api": {"port": 9999},
    }
    path = tmp_path / "config.json"
    path.write_text(__import__("json").dumps(doc))
    config = load_config(path)
    assert [d.id for d in config.devices] == ["light", "tv"]
    assert config.prompt_include_history is True
    assert config.api_port == 9999


def test_load_config_rejects_duplicates_and_garbage(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text(
        '{"devices": [{"id": "a", "capabilities": ["on"]}, {"id": "a", "capabilities": ["on"]}],'
        ' "backend": {"kind": "scripted", "script_path": "x"}}'
    )
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
