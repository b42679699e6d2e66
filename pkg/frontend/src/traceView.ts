// View-model for the trace inspector: collapsible pipeline stages with timing
// badges, and the raw model text shown verbatim next to the repaired parse.

import type { TraceDict } from "./types.js";

export interface StageView {
  name: string;
  summary: string;
  detail: string;
  seconds: number | null;
}

export interface TraceView {
  traceId: string;
  command: string;
  status: string;
  totalSeconds: number;
  planSummary: string;
  rawText: string | null;
  repairedJson: string | null;
  repairApplied: boolean;
  stages: StageView[];
}

const DECISION_LABEL: Record<string, string> = {
  act: "act",
  skip_same: "already there",
  skip_unsupported: "unsupported",
  skip_unknown_device: "unknown device",
};

function planSummary(trace: TraceDict): string {
  if (!trace.plan) return trace.error ? `error: ${trace.error}` : "no plan";
  const acts = trace.plan.entries.filter((e) => e.decision === "act");
  if (acts.length === 0) return "no actions needed";
  return acts.map((e) => `${e.device_id} → ${e.desired}`).join(", ");
}

export function buildTraceView(trace: TraceDict): TraceView {
  const stages: StageView[] = [];

  if (trace.prompt) {
    stages.push({
      name: "prompt",
      summary: `template ${trace.prompt.template_version}, ${trace.prompt.text.length} chars`,
      detail: trace.prompt.text,
      seconds: trace.timings["prompt_build"] ?? null,
    });
  }
  if (trace.result) {
    stages.push({
      name: "model output",
      summary: `${trace.result.backend_id}, ${trace.result.raw_text.length} chars`,
      detail: trace.result.raw_text,
      seconds: trace.timings["inference"] ?? null,
    });
  }
  if (trace.parsed) {
    const commands = trace.parsed.commands
      .map((c) => `${c.device}: ${c.action}${c.mode ? ` (${c.mode})` : ""}`)
      .join(", ");
    stages.push({
      name: "parsed",
      summary:
        `${trace.parsed.commands.length} command(s)` +
        (trace.parsed.repair_applied ? " · repaired" : "") +
        (commands ? `: ${commands}` : ""),
      detail: repairedJson(trace) ?? "",
      seconds: trace.timings["parse"] ?? null,
    });
  }
  if (trace.plan) {
    stages.push({
      name: "plan",
      summary: planSummary(trace),
      detail: trace.plan.entries
        .map(
          (e) =>
            `${e.device_id}: ${DECISION_LABEL[e.decision] ?? e.decision} ` +
            `(desired ${e.desired}, current ${e.current}): ${e.reason}`
        )
        .join("\n"),
      seconds: null,
    });
  }
  if (trace.dispatch_report) {
    const sent = trace.dispatch_report.outcomes.filter((o) => o.sent);
    stages.push({
      name: "dispatch",
      summary: `${sent.length} of ${trace.dispatch_report.outcomes.length} published`,
      detail: trace.dispatch_report.outcomes
        .map((o) => `${o.device_id} ${o.action}: ${o.sent ? "sent" : `not sent (${o.error})`}`)
        .join("\n"),
      seconds: trace.timings["dispatch"] ?? null,
    });
  }
  if (trace.error && !trace.parsed) {
    stages.push({ name: "error", summary: trace.status, detail: trace.error, seconds: null });
  }

  return {
    traceId: trace.trace_id,
    command: trace.user_command,
    status: trace.status,
    totalSeconds: trace.total_seconds,
    planSummary: planSummary(trace),
    rawText: trace.result ? trace.result.raw_text : null,
    repairedJson: repairedJson(trace),
    repairApplied: trace.parsed?.repair_applied ?? false,
    stages,
  };
}

function repairedJson(trace: TraceDict): string | null {
  if (!trace.parsed) return null;
  return JSON.stringify(
    {
      description: trace.parsed.description,
      commands: trace.parsed.commands.map((c) =>
        c.mode ? { device: c.device, action: c.action, mode: c.mode } : { device: c.device, action: c.action }
      ),
    },
    null,
    2
  );
}
