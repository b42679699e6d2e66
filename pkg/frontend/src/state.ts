// Pure app state + reducers. No DOM, no network: everything here is testable
// without a browser. The UI never recomputes gateway decisions, it only
// displays what the events and traces say.

import type { DeviceInfo, GatewayEvent, TraceDict } from "./types.js";

export interface DeviceCard {
  deviceId: string;
  kind: string;
  value: string;
  updatedAt: number;
  // optimistic state awaiting the device's own status report
  pending: boolean;
}

export type Connection = "connecting" | "live" | "stale";

export interface AppState {
  devices: DeviceCard[];
  traces: TraceDict[];
  inFlight: boolean;
  connection: Connection;
  banner: string | null;
}

export function initialState(): AppState {
  return { devices: [], traces: [], inFlight: false, connection: "connecting", banner: null };
}

function toCard(info: DeviceInfo): DeviceCard {
  return {
    deviceId: info.id,
    kind: info.kind,
    value: info.value,
    updatedAt: info.updated_at,
    pending: info.source === "assumed_after_command",
  };
}

/** Replace the card list from GET /devices (initial load and reconnect refresh). */
export function applyDevices(state: AppState, listing: DeviceInfo[]): AppState {
  return { ...state, devices: listing.map(toCard) };
}

/** Fold one event-stream message into the state. */
export function applyEvent(state: AppState, event: GatewayEvent): AppState {
  if (event.type === "device_state") {
    const card: DeviceCard = {
      deviceId: event.device_id,
      kind: state.devices.find((d) => d.deviceId === event.device_id)?.kind ?? "other",
      value: event.value,
      updatedAt: event.updated_at,
      pending: event.pending,
    };
    const known = state.devices.some((d) => d.deviceId === event.device_id);
    const devices = known
      ? state.devices.map((d) => (d.deviceId === event.device_id ? card : d))
      : [...state.devices, card];
    return { ...state, devices };
  }
  if (event.phase === "finished" && event.trace) {
    return upsertTrace(state, event.trace);
  }
  return state;
}

/** Newest first; replaces an existing trace with the same id. */
export function upsertTrace(state: AppState, trace: TraceDict): AppState {
  const rest = state.traces.filter((t) => t.trace_id !== trace.trace_id);
  return { ...state, traces: [trace, ...rest] };
}

export function beginSubmit(state: AppState): AppState {
  return { ...state, inFlight: true, banner: null };
}

export function finishSubmit(state: AppState, trace: TraceDict): AppState {
  const next = upsertTrace(state, trace);
  const banner =
    trace.status === "ok" ? null : `command ${trace.status.replace("_", " ")}: ${trace.error ?? ""}`;
  return { ...next, inFlight: false, banner };
}

export function failSubmit(state: AppState, message: string): AppState {
  return { ...state, inFlight: false, banner: message };
}

export function setConnection(state: AppState, connection: Connection): AppState {
  return { ...state, connection };
}
