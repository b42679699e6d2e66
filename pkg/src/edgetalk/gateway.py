"""Pipeline orchestration: one user command in, one fully recorded trace out.

The gateway owns configuration, wires transport -> processing -> registry,
runs the sanitize/prompt/generate/parse/plan/dispatch pipeline per command,
persists everything to the event log, and fans state changes plus trace
lifecycle events out to push subscribers.
"""

import json
import logging
import queue
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from . import processing
from .backend import BackendConfig, InferenceResult, build_backend
from .errors import (
    BackendError,
    CommandRejectedError,
    ConfigError,
    EmptyDeviceListError,
    ResponseParseError,
    SessionQueueFullError,
    TraceNotFoundError,
    UndecodablePayloadError,
)
from .parsing import ParsedResponse, canonicalize, parse_response
from .processing import NumericValue, SynonymTable
from .prompt import (
    MAX_COMMAND_LENGTH,
    PromptBundle,
    StructuredPrompt,
    build_structured_prompt,
    sanitize_user_command,
)
from .reconcile import DispatchReport, ReconciliationPlan, dispatch, plan
from .registry import (
    DeviceDescriptor,
    DeviceRegistry,
    StateSource,
    DeviceState,
)
from .storage import ContextSnippet, EventKind, EventLog
from .topics import TopicScheme
from .transport import BrokerConfig, MqttTransport, decode_status_payload
from .util import to_jsonable

logger = logging.getLogger(__name__)

DEFAULT_CONTEXT_LIMIT = 3
SESSION_QUEUE_DEPTH = 4


class TraceStatus(str, Enum):
    OK = "ok"
    REJECTED_INPUT = "rejected_input"
    BACKEND_ERROR = "backend_error"
    PARSE_ERROR = "parse_error"


@dataclass
class InferenceTrace:
    """The complete per-command record, stage by stage."""

    trace_id: str
    session_id: str
    user_command: str
    status: TraceStatus
    created_at: float
    prompt: StructuredPrompt | None = None
    result: InferenceResult | None = None
    parsed: ParsedResponse | None = None
    plan: ReconciliationPlan | None = None
    dispatch_report: DispatchReport | None = None
    context_snippets: tuple[ContextSnippet, ...] = ()
    error: str | None = None
    timings: dict[str, float] = field(default_factory=dict)
    stage_starts: dict[str, float] = field(default_factory=dict)
    finished_at: float = 0.0
    total_seconds: float = 0.0
    inference_seq: int | None = None

    def to_dict(self) -> dict:
        return to_jsonable(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "InferenceTrace":
        prompt = doc.get("prompt")
        result = doc.get("result")
        parsed = doc.get("parsed")
        plan_doc = doc.get("plan")
        report = doc.get("dispatch_report")
        return cls(
            trace_id=doc["trace_id"],
            session_id=doc["session_id"],
            user_command=doc["user_command"],
            status=TraceStatus(doc["status"]),
            created_at=doc["created_at"],
            prompt=StructuredPrompt(**prompt) if prompt else None,
            result=InferenceResult(**result) if result else None,
            parsed=ParsedResponse.from_dict(parsed) if parsed else None,
            plan=ReconciliationPlan.from_dict(plan_doc) if plan_doc else None,
            dispatch_report=DispatchReport.from_dict(report) if report else None,
            context_snippets=tuple(
                ContextSnippet(**s) for s in doc.get("context_snippets", ())
            ),
            error=doc.get("error"),
            timings=dict(doc.get("timings", {})),
            stage_starts=dict(doc.get("stage_starts", {})),
            finished_at=doc.get("finished_at", 0.0),
            total_seconds=doc.get("total_seconds", 0.0),
            inference_seq=doc.get("inference_seq"),
        )


# --- configuration -------------------------------------------------------------

@dataclass
class GatewayConfig:
    broker: BrokerConfig
    devices: list[DeviceDescriptor]
    backend: BackendConfig
    history_path: str
    topic_prefix: str = "home"
    synonyms: dict[str, list[str]] | None = None
    prompt_include_history: bool = False
    prompt_history_limit: int = DEFAULT_CONTEXT_LIMIT
    max_command_length: int = MAX_COMMAND_LENGTH
    api_host: str = "127.0.0.1"
    api_port: int = 8080
    ui_dir: str | None = None

    def scheme(self) -> TopicScheme:
        return TopicScheme(prefix=self.topic_prefix)


def load_config(path: str | Path) -> GatewayConfig:
    """Read and validate the gateway's JSON configuration document."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc.msg}") from exc

    try:
        prefix = doc.get("topic_prefix", "home")
        scheme = TopicScheme(prefix=prefix)
        broker = BrokerConfig(**doc.get("broker", {}))
        device_docs = doc.get("devices", [])
        if not device_docs:
            raise ConfigError("config must list at least one device")
        devices = []
        seen: set[str] = set()
        for item in device_docs:
            if item["id"] in seen:
                raise ConfigError(f"duplicate device id {item['id']!r}")
            seen.add(item["id"])
            devices.append(
                DeviceDescriptor.from_scheme(
                    item["id"], item.get("kind", "other"), item.get("capabilities", []), scheme
                )
            )
        backend_doc = dict(doc.get("backend", {}))
        backend = BackendConfig(**backend_doc)
        history_path = doc.get("history_path", "edgetalk-history.jsonl")
        Path(history_path).parent.mkdir(parents=True, exist_ok=True)
        prompt_doc = doc.get("prompt", {})
        api_doc = doc.get("api", {})
        return GatewayConfig(
            broker=broker,
            devices=devices,
            backend=backend,
            history_path=history_path,
            topic_prefix=prefix,
            synonyms=doc.get("synonyms"),
            prompt_include_history=bool(prompt_doc.get("include_history", False)),
            prompt_history_limit=int(prompt_doc.get("history_limit", DEFAULT_CONTEXT_LIMIT)),
            max_command_length=int(prompt_doc.get("max_command_length", MAX_COMMAND_LENGTH)),
            api_host=api_doc.get("host", "127.0.0.1"),
            api_port=int(api_doc.get("port", 8080)),
            ui_dir=doc.get("ui_dir"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


# --- push channel -----------------------------------------------------------------

class Subscription:
    """Bounded event buffer for one push subscriber."""

    _SENTINEL = object()

    def __init__(self, buffer_size: int):
        self._queue: queue.Queue = queue.Queue(maxsize=buffer_size)
        self.closed = False

    def _offer(self, event: dict) -> bool:
        try:
            self._queue.put_nowait(event)
            return True
        except queue.Full:
            return False

    def close(self) -> None:
        self.closed = True
        try:
            self._queue.put_nowait(self._SENTINEL)
        except queue.Full:
            pass

    def get(self, timeout: float | None = None) -> dict | None:
        """Next event, or None when the subscription is closed/timed out."""
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is self._SENTINEL:
            return None
        return item

    def __iter__(self):
        while True:
            item = self._queue.get()
            if item is self._SENTINEL:
                return
            yield item


class EventBus:
    """Fan-out of gateway events; a subscriber that cannot keep up is dropped."""

    def __init__(self, buffer_size: int = 256):
        self.buffer_size = buffer_size
        self._lock = threading.Lock()
        self._subscribers: list[Subscription] = []

    def subscribe(self) -> Subscription:
        subscription = Subscription(self.buffer_size)
        with self._lock:
            self._subscribers.append(subscription)
        return subscription

    def unsubscribe(self, subscription: Subscription) -> None:
        with self._lock:
            if subscription in self._subscribers:
                self._subscribers.remove(subscription)
        subscription.close()

    def publish(self, event: dict) -> None:
        with self._lock:
            subscribers = list(self._subscribers)
        for subscription in subscribers:
            if not subscription._offer(event):
                logger.warning("dropping slow push subscriber")
                self.unsubscribe(subscription)


# --- per-session serialization -------------------------------------------------------

class _SessionGate:
    """FIFO turn-taking per session with a bounded waiting line."""

    def __init__(self, max_waiting: int = SESSION_QUEUE_DEPTH):
        self._cond = threading.Condition()
        self._waiting: deque[int] = deque()
        self._busy = False
        self._next_ticket = 0
        self.max_waiting = max_waiting

    def acquire(self) -> None:
        with self._cond:
            if not self._busy and not self._waiting:
                self._busy = True
                return
            if len(self._waiting) >= self.max_waiting:
                raise SessionQueueFullError(
                    f"session already has {self.max_waiting} queued commands"
                )
            ticket = self._next_ticket
            self._next_ticket += 1
            self._waiting.append(ticket)
            while self._busy or self._waiting[0] != ticket:
                self._cond.wait()
            self._waiting.popleft()
            self._busy = True

    def release(self) -> None:
        with self._cond:
            self._busy = False
            self._cond.notify_all()


# --- value (de)serialization for sensor records ----------------------------------------

def _value_to_doc(value: str | NumericValue):
    if isinstance(value, NumericValue):
        return {"magnitude": value.magnitude, "unit": value.unit}
    return value


def _value_from_doc(doc) -> str | NumericValue:
    if isinstance(doc, dict):
        return NumericValue(magnitude=doc["magnitude"], unit=doc.get("unit"))
    return doc


# --- the gateway -------------------------------------------------------------------------

class Gateway:
    """Own the registry, transport, backend, log, and the per-command pipeline."""

    def __init__(self, config: GatewayConfig, backend=None, log: EventLog | None = None):
        self.config = config
        self.scheme = config.scheme()
        self.synonym_table = SynonymTable(config.synonyms)
        self.registry = DeviceRegistry(self.scheme)
        for descriptor in config.devices:
            self.registry.register_device(descriptor)
        self.log = log if log is not None else EventLog(config.history_path)
        self.backend = backend if backend is not None else build_backend(config.backend)
        self.bus = EventBus()
        self.transport = MqttTransport(config.broker, self.scheme, on_status=self._on_status)
        self.registry.add_listener(self._on_state_change)
        self._traces: dict[str, InferenceTrace] = {}
        self._trace_order: list[str] = []
        self._traces_lock = threading.Lock()
        self._sessions: dict[str, _SessionGate] = {}
        self._sessions_lock = threading.Lock()
        self._storage_error: str | None = None
        self._started = False

    # --- lifecycle ---------------------------------------------------------------

    def start(self, wait_broker: float = 0.0) -> "Gateway":
        self.restore_from_history()
        self.transport.start()
        self.transport.subscribe_all(self.registry.list_devices())
        if wait_broker:
            self.transport.wait_connected(wait_broker)
        self._started = True
        return self

    def stop(self) -> None:
        self.transport.stop()
        self.log.close()
        self._started = False

    def __enter__(self) -> "Gateway":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    # --- restore -----------------------------------------------------------------

    def restore_from_history(self) -> int:
        """Replay the event log: final device states and the trace list come back."""
        restored = 0
        for record in self.log.records():
            if record.kind is EventKind.SENSOR:
                self.registry.apply_status_update(
                    record.device_id,
                    _value_from_doc(record.payload["value"]),
                    record.timestamp,
                    source=StateSource(record.payload.get("source", "status_message")),
                )
            elif record.kind is EventKind.DISPATCHED_ACTION:
                dispatched_at = record.payload.get("dispatched_at") or record.timestamp
                self.registry.apply_optimistic(
                    record.device_id, record.payload["action"], dispatched_at
                )
            elif record.kind is EventKind.INFERENCE:
                trace = InferenceTrace.from_dict(record.payload["trace"])
                trace.inference_seq = record.seq
                if trace.plan is not None:
                    trace.plan.source_inference_seq = record.seq
                self._remember_trace(trace)
                restored += 1
        return restored

    # --- inbound telemetry ----------------------------------------------------------

    def _on_status(self, device_id: str, payload: bytes, receive_ts: float) -> None:
        try:
            raw_value, device_ts = decode_status_payload(payload)
        except UndecodablePayloadError:
            self.transport.counters.bump("undecodable_status_payload")
            return
        descriptor = self.registry.get_device(device_id)
        kind = descriptor.kind.value if descriptor else "other"
        reading = processing.normalize(
            raw_value, kind, device_id, device_ts if device_ts is not None else receive_ts,
            table=self.synonym_table,
        )
        state = self.registry.apply_status_update(device_id, reading.value, reading.timestamp)
        if state is None:
            return
        self._append_guarded(
            EventKind.SENSOR,
            {"value": _value_to_doc(reading.value), "source": state.source.value},
            device_id=device_id,
            timestamp=reading.timestamp,
        )

    def _on_state_change(self, device_id: str, state: DeviceState) -> None:
        self.bus.publish(
            {
                "type": "device_state",
                "device_id": device_id,
                "value": state.value_text(),
                "updated_at": state.updated_at,
                "source": state.source.value,
                "pending": state.source is StateSource.ASSUMED_AFTER_COMMAND,
            }
        )

    def _append_guarded(self, kind, payload, device_id=None, timestamp=None) -> int | None:
        """Append to history; storage failure degrades health but never the pipeline."""
        try:
            seq = self.log.append(kind, payload, device_id=device_id, timestamp=timestamp)
            self._storage_error = None
            return seq
        except Exception as exc:
            logger.error("history append failed: %s", exc)
            self._storage_error = str(exc)
            return None

    # --- the pipeline ------------------------------------------------------------------

    def submit_command(self, session_id: str, text: str) -> InferenceTrace:
        """Run the full pipeline for one command; always returns a (partial) trace."""
        gate = self._session_gate(session_id)
        gate.acquire()
        try:
            return self._run_pipeline(session_id, text)
        finally:
            gate.release()

    def _run_pipeline(self, session_id: str, text: str) -> InferenceTrace:
        started_wall = time.time()
        started_mono = time.monotonic()
        trace = InferenceTrace(
            trace_id=uuid.uuid4().hex[:12],
            session_id=session_id,
            user_command=text,
            status=TraceStatus.OK,
            created_at=started_wall,
        )
        self.bus.publish(
            {
                "type": "trace",
                "phase": "started",
                "trace_id": trace.trace_id,
                "session_id": session_id,
                "user_command": text,
            }
        )
        try:
            self._execute_stages(trace, text)
        finally:
            trace.finished_at = time.time()
            trace.total_seconds = time.monotonic() - started_mono
            self._persist_trace(trace)
            self._remember_trace(trace)
            self.bus.publish(
                {
                    "type": "trace",
                    "phase": "finished",
                    "trace_id": trace.trace_id,
                    "session_id": session_id,
                    "status": trace.status.value,
                    "trace": trace.to_dict(),
                }
            )
        return trace

    def _persist_trace(self, trace: InferenceTrace) -> None:
        """Write the inference record, then one dispatched_action record per publish.

        The action records reference the inference record's seq; the trace's
        own seq fields are filled in memory only (replay re-derives them from
        the record itself).
        """
        seq = self._append_guarded(EventKind.INFERENCE, {"trace": trace.to_dict()})
        if seq is None:
            return
        trace.inference_seq = seq
        if trace.plan is not None:
            trace.plan.source_inference_seq = seq
        if trace.dispatch_report is None:
            return
        for outcome in trace.dispatch_report.outcomes:
            if outcome.sent:
                self._append_guarded(
                    EventKind.DISPATCHED_ACTION,
                    {
                        "action": outcome.action,
                        "inference_seq": seq,
                        "dispatched_at": outcome.dispatched_at,
                    },
                    device_id=outcome.device_id,
                )

    def _execute_stages(self, trace: InferenceTrace, text: str) -> None:
        # input guard: nothing reaches the backend unless this passes
        try:
            command = sanitize_user_command(text, self.config.max_command_length)
        except CommandRejectedError as exc:
            trace.status = TraceStatus.REJECTED_INPUT
            trace.error = exc.reason
            return
        trace.user_command = command

        # prompt build: snapshot, optional retrieval, template expansion
        trace.stage_starts["prompt_build"] = time.time()
        stage_start = time.monotonic()
        snapshot = self.registry.snapshot()
        devices = tuple(d.id for d in self.registry.list_devices())
        snippets: tuple[ContextSnippet, ...] = ()
        if self.config.prompt_include_history:
            snippets = tuple(
                self.log.retrieve_context(command, devices, self.config.prompt_history_limit)
            )
        self._append_guarded(
            EventKind.USER_COMMAND, {"session_id": trace.session_id, "text": command}
        )
        try:
            bundle = PromptBundle(
                user_command=command,
                devices=devices,
                current_sensor_values=snapshot.value_map(),
                context_snippets=snippets,
            )
            trace.prompt = build_structured_prompt(bundle)
        except (CommandRejectedError, EmptyDeviceListError, ValueError) as exc:
            trace.status = TraceStatus.REJECTED_INPUT
            trace.error = str(exc)
            return
        trace.context_snippets = snippets
        trace.timings["prompt_build"] = time.monotonic() - stage_start

        # inference
        trace.stage_starts["inference"] = time.time()
        try:
            trace.result = self.backend.generate(trace.prompt)
        except BackendError as exc:
            trace.status = TraceStatus.BACKEND_ERROR
            trace.error = str(exc)
            return
        trace.timings["inference"] = trace.result.latency

        # parse + canonicalize
        trace.stage_starts["parse"] = time.time()
        stage_start = time.monotonic()
        try:
            parsed = parse_response(trace.result.raw_text)
        except ResponseParseError as exc:
            trace.status = TraceStatus.PARSE_ERROR
            trace.error = str(exc)
            trace.timings["parse"] = time.monotonic() - stage_start
            return
        trace.parsed = canonicalize(parsed, self.registry, self.synonym_table)
        trace.timings["parse"] = time.monotonic() - stage_start

        # plan and dispatch; persistence happens once the trace is finalized
        trace.stage_starts["dispatch"] = time.time()
        stage_start = time.monotonic()
        trace.plan = plan(trace.parsed, snapshot, self.registry)
        trace.dispatch_report = dispatch(trace.plan, self.transport, self.registry)
        trace.timings["dispatch"] = time.monotonic() - stage_start

    # --- reads ----------------------------------------------------------------------

    def _session_gate(self, session_id: str) -> _SessionGate:
        with self._sessions_lock:
            gate = self._sessions.get(session_id)
            if gate is None:
                gate = _SessionGate()
                self._sessions[session_id] = gate
            return gate

    def _remember_trace(self, trace: InferenceTrace) -> None:
        with self._traces_lock:
            if trace.trace_id not in self._traces:
                self._trace_order.append(trace.trace_id)
            self._traces[trace.trace_id] = trace

    def get_trace(self, trace_id: str) -> InferenceTrace:
        with self._traces_lock:
            trace = self._traces.get(trace_id)
        if trace is None:
            raise TraceNotFoundError(f"no trace {trace_id!r}")
        return trace

    def list_traces(self, session_id: str | None = None) -> list[InferenceTrace]:
        """Traces in reverse chronological order, optionally one session only."""
        with self._traces_lock:
            traces = [self._traces[tid] for tid in reversed(self._trace_order)]
        if session_id is not None:
            traces = [t for t in traces if t.session_id == session_id]
        return traces

    def get_devices(self) -> list[dict]:
        snapshot = self.registry.snapshot()
        out = []
        for descriptor in self.registry.list_devices():
            state = snapshot.states[descriptor.id]
            out.append(
                {
                    "id": descriptor.id,
                    "kind": descriptor.kind.value,
                    "capabilities": sorted(descriptor.capabilities),
                    "status_topic": descriptor.status_topic,
                    "command_topic": descriptor.command_topic,
                    "value": state.value_text(),
                    "updated_at": state.updated_at,
                    "source": state.source.value,
                }
            )
        return out

    def state_stream(self) -> Subscription:
        """Subscribe to device-state and trace lifecycle events (in order, post-subscribe)."""
        return self.bus.subscribe()

    def health(self) -> dict:
        broker_health = self.transport.health()
        degraded = broker_health["state"] != "connected" or self._storage_error is not None
        return {
            "status": "degraded" if degraded else "ok",
            "broker": broker_health,
            "storage_error": self._storage_error,
            "devices": len(self.registry.list_devices()),
            "traces": len(self._trace_order),
        }
