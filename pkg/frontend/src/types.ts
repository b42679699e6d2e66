// Wire types mirroring the gateway's REST and event-stream JSON.

export interface DeviceInfo {
  id: string;
  kind: string;
  capabilities: string[];
  status_topic: string;
  command_topic: string;
  value: string;
  updated_at: number;
  source: string;
}

export interface ActionCommandDict {
  device: string;
  action: string;
  mode: string | null;
}

export interface ParsedResponseDict {
  description: string;
  commands: ActionCommandDict[];
  repair_applied: boolean;
  diagnostics: string[];
}

export interface PlanEntryDict {
  device_id: string;
  desired: string;
  current: string;
  decision: string;
  reason: string;
}

export interface PlanDict {
  entries: PlanEntryDict[];
  created_at: number;
  source_inference_seq: number | null;
}

export interface DispatchOutcomeDict {
  device_id: string;
  action: string;
  sent: boolean;
  error: string | null;
  dispatched_at: number | null;
}

export interface TraceDict {
  trace_id: string;
  session_id: string;
  user_command: string;
  status: string;
  created_at: number;
  prompt: { text: string; template_version: string } | null;
  result: { raw_text: string; latency: number; backend_id: string } | null;
  parsed: ParsedResponseDict | null;
  plan: PlanDict | null;
  dispatch_report: { outcomes: DispatchOutcomeDict[] } | null;
  context_snippets: { text: string; score: number; source_seq: number }[];
  error: string | null;
  timings: Record<string, number>;
  stage_starts: Record<string, number>;
  finished_at: number;
  total_seconds: number;
  inference_seq: number | null;
}

export interface DeviceStateEvent {
  type: "device_state";
  device_id: string;
  value: string;
  updated_at: number;
  source: string;
  pending: boolean;
}

export interface TraceLifecycleEvent {
  type: "trace";
  phase: "started" | "finished";
  trace_id: string;
  session_id: string;
  user_command?: string;
  status?: string;
  trace?: TraceDict;
}

export type GatewayEvent = DeviceStateEvent | TraceLifecycleEvent;
