"""CLI smoke tests via click's runner and a live stack for `say`."""

import json
import re
import uuid

import pytest
from click.testing import CliRunner

from edgetalk.api import ApiServer
from edgetalk.backend import BackendConfig, bundled_script_path
from edgetalk.cli import bench_main, devices, main, say, write_default_config
from edgetalk.gateway import Gateway, GatewayConfig
from edgetalk.registry import DeviceDescriptor, DeviceKind
from edgetalk.topics import TopicScheme
from edgetalk.transport import BrokerConfig


def test_bench_cli_table(tmp_path):
    runner = CliRunner()
    result = runner.invoke(
        bench_main, ["--scenario", "gemma2b", "--actuation-delay", "0.02"]
    )
    assert result.exit_code == 0, result.output
    assert "device-state accuracy: 7/9 (0.778)" in result.output


def test_bench_cli_records_to_file(tmp_path):
    runner = CliRunner()
    out = tmp_path / "report.jsonl"
    result = runner.invoke(
        bench_main,
        ["--scenario", "llama3", "--format", "records", "--out", str(out), "--actuation-delay", "0.02"],
    )
    assert result.exit_code == 0, result.output
    lines = [json.loads(line) for line in out.read_text().splitlines() if line]
    assert len(lines) == 3
    assert lines[2]["per_device_match"] == {"fan": True, "light": False, "tv": True}


def test_bench_cli_unknown_scenario():
    runner = CliRunner()
    result = runner.invoke(bench_main, ["--scenario", "nonexistent"])
    assert result.exit_code != 0


def test_write_default_config_is_loadable(tmp_path):
    from edgetalk.gateway import load_config

    path = tmp_path / "config.json"
    write_default_config(path)
    config = load_config(path)
    assert [d.id for d in config.devices] == ["light", "tv", "fan"]
    assert config.backend.kind == "http"


@pytest.fixture
def live_stack(tmp_path):
    scheme = TopicScheme()
    config = GatewayConfig(
        broker=BrokerConfig(
            port=1,
            client_id=f"gw-{uuid.uuid4().hex[:6]}",
            reconnect_initial_seconds=0.05,
            reconnect_max_seconds=0.5,
        ),
        devices=[
            DeviceDescriptor.from_scheme(d, k, {"on", "off"}, scheme)
            for d, k in [("light", DeviceKind.LIGHT), ("tv", DeviceKind.TV), ("fan", DeviceKind.FAN)]
        ],
        backend=BackendConfig(kind="scripted", script_path=str(bundled_script_path("llama3"))),
        history_path=str(tmp_path / "history.jsonl"),
    )
    gateway = Gateway(config).start()
    for device_id, value in [("light", "on"), ("tv", "on"), ("fan", "off")]:
        gateway.registry.apply_status_update(device_id, value, 1.0)
    api = ApiServer(gateway, host="127.0.0.1", port=0).start()
    yield api
    api.stop()
    gateway.stop()


def test_say_against_live_gateway(live_stack):
    runner = CliRunner()
    result = runner.invoke(
        say, ["I want to sleep now", "--server", live_stack.url, "--session", "cli-test"]
    )
    assert result.exit_code == 0, result.output
    assert "status: ok" in result.output
    assert re.search(r"tv: act", result.output)
    assert "dispatched 1 command(s)" in result.output


def test_devices_against_live_gateway(live_stack):
    runner = CliRunner()
    result = runner.invoke(devices, ["--server", live_stack.url])
    assert result.exit_code == 0, result.output
    for device_id in ("light", "tv", "fan"):
        assert device_id in result.output


def test_say_unreachable_gateway():
    runner = CliRunner()
    result = runner.invoke(say, ["hello", "--server", "http://127.0.0.1:9"])
    assert result.exit_code != 0


def test_main_group_help():
    runner = CliRunner()
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    assert "serve" in result.output and "say" in result.output
