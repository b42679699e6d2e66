"""Command-line entry points: gateway service, one-shot client, simulator, bench, broker."""

import json
import logging
import sys
import time
from pathlib import Path

import click
import requests

from .api import ApiServer
from .bench import bundled_scenario_path, emit_report, load_scenario, run_scenario, run_scenario_embedded
from .errors import EdgeTalkError
from .gateway import Gateway, load_config
from .mqtt import DevBroker
from .simulator import DeviceFleet, SimDeviceConfig


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@click.group()
def main():
    """Natural-language control gateway for MQTT smart devices."""


@main.command()
@click.option(
    "--config",
    "config_path",
    envvar="EDGETALK_CONFIG",
    required=True,
    type=click.Path(exists=True),
    help="Gateway configuration file (or set EDGETALK_CONFIG).",
)
@click.option("--verbose", is_flag=True, help="Debug logging.")
def serve(config_path, verbose):
    """Run the gateway service and its HTTP API."""
    _setup_logging(verbose)
    config = load_config(config_path)
    gateway = Gateway(config).start()
    server = ApiServer(gateway).start()
    click.echo(f"gateway listening on {server.url} (broker {config.broker.host}:{config.broker.port})")
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        click.echo("shutting down")
    finally:
        server.stop()
        gateway.stop()


@main.command()
@click.argument("text")
@click.option("--server", "server_url", default="http://127.0.0.1:8080", show_default=True)
@click.option("--session", default="cli", show_default=True)
def say(text, server_url, session):
    """Submit one natural-language command to a running gateway."""
    try:
        response = requests.post(
            f"{server_url}/command", json={"session_id": session, "text": text}, timeout=600
        )
    except requests.RequestException as exc:
        raise click.ClickException(f"gateway unreachable: {exc}")
    if response.status_code != 200:
        raise click.ClickException(f"gateway answered {response.status_code}: {response.text}")
    trace = response.json()
    click.echo(f"status: {trace['status']}")
    if trace.get("parsed"):
        click.echo(f"description: {trace['parsed']['description']}")
    if trace.get("plan"):
        for entry in trace["plan"]["entries"]:
            click.echo(
                f"  {entry['device_id']}: {entry['decision']} "
                f"(desired {entry['desired']}, current {entry['current']}): {entry['reason']}"
            )
    if trace.get("dispatch_report"):
        sent = [o for o in trace["dispatch_report"]["outcomes"] if o["sent"]]
        click.echo(f"dispatched {len(sent)} command(s)")
    if trace.get("error"):
        click.echo(f"error: {trace['error']}", err=True)
        sys.exit(1)


@main.command()
@click.option("--server", "server_url", default="http://127.0.0.1:8080", show_default=True)
def devices(server_url):
    """List devices and their last known states."""
    try:
        listing = requests.get(f"{server_url}/devices", timeout=10).json()
    except requests.RequestException as exc:
        raise click.ClickException(f"gateway unreachable: {exc}")
    for device in listing:
        click.echo(
            f"{device['id']:<12} {device['kind']:<8} value={device['value']:<10} "
            f"source={device['source']}"
        )


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=1883, show_default=True)
def broker(host, port):
    """Run the bundled development MQTT broker."""
    _setup_logging(False)
    dev_broker = DevBroker(host=host, port=port).start()
    click.echo(f"dev broker on {dev_broker.host}:{dev_broker.port}")
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        dev_broker.stop()


def broker_main():
    broker(standalone_mode=True)  # pragma: no cover - thin alias


@click.command()
@click.option(
    "--config",
    "config_path",
    envvar="EDGETALK_CONFIG",
    required=True,
    type=click.Path(exists=True),
    help="Gateway configuration file (shares the device catalog).",
)
@click.option("--actuation-delay", default=0.05, show_default=True, help="Seconds per actuation.")
@click.option(
    "--initial",
    "initials",
    multiple=True,
    help="Initial state overrides, repeatable: --initial light=on",
)
@click.option("--verbose", is_flag=True)
def sim_main(config_path, actuation_delay, initials, verbose):
    """Run a simulated device fleet for the catalog in the gateway config."""
    _setup_logging(verbose)
    config = load_config(config_path)
    overrides = {}
    for item in initials:
        device_id, _, value = item.partition("=")
        if not value:
            raise click.ClickException(f"--initial expects id=value, got {item!r}")
        overrides[device_id] = value
    configs = []
    for descriptor in config.devices:
        configs.append(
            SimDeviceConfig(
                descriptor,
                actuation_delay=actuation_delay,
                initial_value=overrides.get(descriptor.id, "unknown"),
            )
        )
    try:
        fleet = DeviceFleet(configs, config.broker.host, config.broker.port).start()
    except EdgeTalkError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"simulating {len(configs)} device(s) against {config.broker.host}:{config.broker.port}")
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        fleet.stop()


@click.command()
@click.option("--scenario", "scenario_ref", required=True, help="Scenario file path or bundled name.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write the report here.")
@click.option(
    "--format", "fmt", type=click.Choice(["table", "records"]), default="table", show_default=True
)
@click.option("--broker", "broker_addr", default=None, help="host:port of an external broker (default: embedded).")
@click.option("--actuation-delay", default=0.05, show_default=True)
@click.option("--verbose", is_flag=True)
def bench_main(scenario_ref, out_path, fmt, broker_addr, actuation_delay, verbose):
    """Replay a scenario and report per-device accuracy and timing."""
    _setup_logging(verbose)
    path = Path(scenario_ref)
    if not path.exists():
        path = bundled_scenario_path(scenario_ref)
        if not path.exists():
            raise click.ClickException(f"no scenario file or bundled scenario {scenario_ref!r}")
    try:
        scenario = load_scenario(path)
        started = time.monotonic()
        if broker_addr:
            host, _, port = broker_addr.partition(":")
            report = run_scenario(
                scenario, host, int(port or 1883), actuation_delay=actuation_delay
            )
        else:
            report = run_scenario_embedded(scenario, actuation_delay=actuation_delay)
        elapsed = time.monotonic() - started
    except EdgeTalkError as exc:
        raise click.ClickException(str(exc))
    rendered = emit_report(report, fmt)
    if out_path:
        Path(out_path).write_text(rendered, encoding="utf-8")
        click.echo(f"report written to {out_path} ({elapsed:.1f}s)")
    else:
        click.echo(rendered, nl=False)
        click.echo(f"(completed in {elapsed:.1f}s)", err=True)


def write_default_config(path: Path, broker_port: int = 1883) -> None:
    """Helper used by docs/tests to produce a runnable three-device config."""
    doc = {
        "broker": {"host": "127.0.0.1", "port": broker_port, "client_id": "edgetalk-gateway"},
        "topic_prefix": "home",
        "devices": [
            {"id": "light", "kind": "light", "capabilities": ["on", "off"]},
            {"id": "tv", "kind": "tv", "capabilities": ["on", "off"]},
            {"id": "fan", "kind": "fan", "capabilities": ["on", "off"]},
        ],
        "backend": {
            "kind": "http",
            "endpoint": "http://localhost:11434/api/generate",
            "model_name": "llama3",
            "timeout_seconds": 300,
        },
        "history_path": "edgetalk-history.jsonl",
        "prompt": {"include_history": False},
        "api": {"host": "127.0.0.1", "port": 8080},
    }
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
