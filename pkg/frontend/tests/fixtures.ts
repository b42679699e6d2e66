// Shared test fixtures shaped like real gateway wire JSON.

import type { DeviceInfo, TraceDict } from "../src/types.js";

export const SLEEP_RAW =
  "Here is your sleep-aiding response:\n" +
  "Description: Prepare your sleep sanctuary with a dim light and calming TV settings.\n" +
  "{\n" +
  '  "description": "Prepare your sleep sanctuary with a dim light and calming TV settings.",\n' +
  '  "commands": [\n' +
  '    {"device": "light", "action": "dim"},\n' +
  '    {"device": "tv", "action": "off"}\n' +
  '    {"device": "fan", "action": "off"}\n' +
  "  ]\n" +
  "}";

export function deviceInfo(overrides: Partial<DeviceInfo> = {}): DeviceInfo {
  return {
    id: "tv",
    kind: "tv",
    capabilities: ["off", "on"],
    status_topic: "home/tv/status",
    command_topic: "home/tv/command",
    value: "on",
    updated_at: 100,
    source: "status_message",
    ...overrides,
  };
}

export function sleepTrace(overrides: Partial<TraceDict> = {}): TraceDict {
  return {
    trace_id: "t1",
    session_id: "s1",
    user_command: "I want to sleep now",
    status: "ok",
    created_at: 1000,
    prompt: { text: "I want to sleep now.\n...", template_version: "v1" },
    result: { raw_text: SLEEP_RAW, latency: 0.126, backend_id: "scripted:llama3" },
    parsed: {
      description: "Prepare your sleep sanctuary with a dim light and calming TV settings.",
      commands: [
        { device: "light", action: "dim", mode: null },
        { device: "tv", action: "off", mode: null },
        { device: "fan", action: "off", mode: null },
      ],
      repair_applied: true,
      diagnostics: [],
    },
    plan: {
      entries: [
        {
          device_id: "light",
          desired: "dim",
          current: "on",
          decision: "skip_unsupported",
          reason: "'dim' not in capabilities {off, on}",
        },
        {
          device_id: "tv",
          desired: "off",
          current: "on",
          decision: "act",
          reason: "current 'on' differs from desired 'off'",
        },
        {
          device_id: "fan",
          desired: "off",
          current: "off",
          decision: "skip_same",
          reason: "already 'off', no action needed",
        },
      ],
      created_at: 1000.5,
      source_inference_seq: 7,
    },
    dispatch_report: {
      outcomes: [
        { device_id: "tv", action: "off", sent: true, error: null, dispatched_at: 1000.6 },
      ],
    },
    context_snippets: [],
    error: null,
    timings: { prompt_build: 0.001, inference: 0.126, parse: 0.002, dispatch: 0.01 },
    stage_starts: { prompt_build: 1000.1, inference: 1000.2, parse: 1000.4, dispatch: 1000.5 },
    finished_at: 1001,
    total_seconds: 0.9,
    inference_seq: 7,
    ...overrides,
  };
}
