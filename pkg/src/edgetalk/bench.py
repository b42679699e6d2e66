"""Scenario replay harness: run commands, compare final device states, report.

Each step is independent: the fleet is forced to the step's initial states,
the command runs through the whole gateway pipeline, and the fleet's ground
truth is scored against the expected states once it converges (or the timeout
flags the step). With a scripted backend and a fault-free fleet the rendered
report is bit-identical across runs: the time column shows the injected
script delay (the measured wall-clock latency stays on the report object).
"""

import json
import tempfile
import time
import uuid
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .backend import BackendConfig, bundled_script_path
from .errors import ScenarioError
from .gateway import Gateway, GatewayConfig, TraceStatus
from .mqtt import DevBroker
from .registry import DeviceDescriptor, DeviceKind, UNKNOWN_VALUE
from .simulator import DeviceFleet, SimDeviceConfig
from .topics import TopicScheme
from .transport import BrokerConfig
from .util import wait_until

DEFAULT_CONVERGENCE_TIMEOUT = 10.0
DEFAULT_ACTUATION_DELAY = 0.05


@dataclass(frozen=True)
class ScenarioStep:
    command: str
    initial_states: dict[str, str]
    expected_states: dict[str, str]


@dataclass(frozen=True)
class Scenario:
    name: str
    backend_label: str
    script_path: str
    devices: list[DeviceDescriptor]
    steps: list[ScenarioStep]


@dataclass
class StepResult:
    command: str
    expected: dict[str, str]
    observed: dict[str, str]
    per_device_match: dict[str, bool]
    latency_seconds: float  # measured wall-clock backend latency
    display_time_seconds: float  # scripted delay when scripted; else the measurement
    converged: bool
    trace_status: str

    @property
    def matched(self) -> int:
        return sum(self.per_device_match.values())

    @property
    def total(self) -> int:
        return len(self.per_device_match)


@dataclass
class BenchReport:
    scenario_name: str
    backend_label: str
    steps: list[StepResult] = field(default_factory=list)

    @property
    def matched(self) -> int:
        return sum(step.matched for step in self.steps)

    @property
    def total(self) -> int:
        return sum(step.total for step in self.steps)

    @property
    def accuracy(self) -> float | None:
        """Matched device-states over total; absent for an empty scenario."""
        return self.matched / self.total if self.total else None


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file {path} is not valid JSON: {exc.msg}") from exc

    try:
        scheme = TopicScheme()
        devices = [
            DeviceDescriptor.from_scheme(
                d["id"], DeviceKind(d.get("kind", "other")), d.get("capabilities", []), scheme
            )
            for d in doc["devices"]
        ]
        device_ids = {d.id for d in devices}
        script = doc["script"]
        script_path = Path(script)
        if not script_path.exists():
            bundled = bundled_script_path(script)
            if not bundled.exists():
                raise ScenarioError(f"script {script!r} is neither a file nor a bundled script")
            script_path = bundled
        steps = []
        for index, step in enumerate(doc["steps"]):
            initial = dict(step["initial_states"])
            expected = dict(step["expected_states"])
            if set(initial) != device_ids:
                raise ScenarioError(
                    f"step {index}: initial_states must cover exactly the devices {sorted(device_ids)}"
                )
            if not set(expected) <= device_ids:
                raise ScenarioError(f"step {index}: expected_states mention unknown devices")
            steps.append(
                ScenarioStep(command=step["command"], initial_states=initial, expected_states=expected)
            )
        return Scenario(
            name=doc["name"],
            backend_label=doc.get("backend_label", script_path.stem),
            script_path=str(script_path),
            devices=devices,
            steps=steps,
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc


def bundled_scenario_path(name: str) -> Path:
    return Path(resources.files("edgetalk").joinpath(f"data/scenarios/{name}.json"))


def run_scenario(
    scenario: Scenario,
    broker_host: str,
    broker_port: int,
    actuation_delay: float = DEFAULT_ACTUATION_DELAY,
    convergence_timeout: float = DEFAULT_CONVERGENCE_TIMEOUT,
) -> BenchReport:
    """Drive the gateway+fleet under test through every step of the scenario."""
    report = BenchReport(scenario_name=scenario.name, backend_label=scenario.backend_label)
    with tempfile.TemporaryDirectory(prefix="edgetalk-bench-") as workdir:
        config = GatewayConfig(
            broker=BrokerConfig(
                host=broker_host,
                port=broker_port,
                client_id=f"bench-gw-{uuid.uuid4().hex[:6]}",
                reconnect_initial_seconds=0.05,
                reconnect_max_seconds=1.0,
            ),
            devices=scenario.devices,
            backend=BackendConfig(kind="scripted", script_path=scenario.script_path),
            history_path=str(Path(workdir) / "history.jsonl"),
        )
        gateway = Gateway(config).start()
        fleet = None
        try:
            if not gateway.transport.wait_connected(10):
                raise ScenarioError(f"broker unreachable at {broker_host}:{broker_port}")
            fleet = DeviceFleet(
                [
                    SimDeviceConfig(descriptor, actuation_delay=actuation_delay)
                    for descriptor in scenario.devices
                ],
                broker_host,
                broker_port,
            ).start()
            for step in scenario.steps:
                report.steps.append(
                    _run_step(step, scenario, gateway, fleet, convergence_timeout)
                )
        finally:
            if fleet is not None:
                fleet.stop()
            gateway.stop()
    return report


def _run_step(
    step: ScenarioStep,
    scenario: Scenario,
    gateway: Gateway,
    fleet: DeviceFleet,
    convergence_timeout: float,
) -> StepResult:
    fleet.apply_states(step.initial_states)
    if not wait_until(
        lambda: gateway.registry.snapshot().value_map() == step.initial_states, timeout=5
    ):
        raise ScenarioError(
            f"registry never reached initial states for step {step.command!r}: "
            f"{gateway.registry.snapshot().value_map()}"
        )

    trace = gateway.submit_command("bench", step.command)

    # convergence target: the step's initial states with the plan's acts applied
    target = dict(step.initial_states)
    if trace.plan is not None:
        for entry in trace.plan.act_entries():
            if entry.device_id in target:
                target[entry.device_id] = entry.desired
    converged = fleet.wait_for(target, timeout=convergence_timeout)

    observed = fleet.fleet_state()
    per_device_match = {
        device.id: observed.get(device.id, UNKNOWN_VALUE) == step.expected_states[device.id]
        for device in scenario.devices
        if device.id in step.expected_states
    }
    latency = trace.result.latency if trace.result is not None else 0.0
    scripted_delay = None
    if hasattr(gateway.backend, "delay_for"):
        scripted_delay = gateway.backend.delay_for(trace.user_command)
    return StepResult(
        command=step.command,
        expected=dict(step.expected_states),
        observed=observed,
        per_device_match=per_device_match,
        latency_seconds=latency,
        display_time_seconds=scripted_delay if scripted_delay is not None else latency,
        converged=converged,
        trace_status=trace.status.value,
    )


def run_scenario_embedded(scenario: Scenario, **kwargs) -> BenchReport:
    """Run against a broker owned by the harness (no external broker needed)."""
    with DevBroker() as broker:
        return run_scenario(scenario, broker.host, broker.port, **kwargs)


# --- rendering -----------------------------------------------------------------------


def _render_states(states: dict[str, str], order: list[str]) -> str:
    return " ".join(f"{device}={states[device]}" for device in order if device in states)


def emit_report(report: BenchReport, fmt: str = "table") -> str:
    """Deterministic rendering; 'records' is one JSON line per step."""
    if fmt == "records":
        lines = []
        for step in report.steps:
            lines.append(
                json.dumps(
                    {
                        "scenario": report.scenario_name,
                        "backend": report.backend_label,
                        "command": step.command,
                        "expected": step.expected,
                        "observed": step.observed,
                        "per_device_match": step.per_device_match,
                        "converged": step.converged,
                        "trace_status": step.trace_status,
                        "time_seconds": round(step.display_time_seconds, 3),
                    },
                    separators=(",", ":"),
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + "\n"
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")

    device_order = sorted({d for step in report.steps for d in step.per_device_match})
    headers = ["Command", "Expected", "Observed", "Match", "Time (s)"]
    rows = []
    for step in report.steps:
        rows.append(
            [
                step.command,
                _render_states(step.expected, device_order),
                _render_states(step.observed, device_order),
                f"{step.matched}/{step.total}",
                f"{step.display_time_seconds:.3f}",
            ]
        )
    widths = [
        max(len(headers[col]), *(len(row[col]) for row in rows)) if rows else len(headers[col])
        for col in range(len(headers))
    ]

    def line(cells):
        return "| " + " | ".join(cell.ljust(width) for cell, width in zip(cells, widths)) + " |"

    out = [f"scenario: {report.scenario_name} (backend: {report.backend_label})"]
    out.append(line(headers))
    out.append("|" + "|".join("-" * (width + 2) for width in widths) + "|")
    out.extend(line(row) for row in rows)
    if report.accuracy is None:
        out.append("device-state accuracy: n/a (no steps)")
    else:
        times = [step.display_time_seconds for step in report.steps]
        out.append(
            f"device-state accuracy: {report.matched}/{report.total} ({report.accuracy:.3f}); "
            f"time mean/min/max: {sum(times) / len(times):.3f}/{min(times):.3f}/{max(times):.3f} s"
        )
    return "\n".join(out) + "\n"
