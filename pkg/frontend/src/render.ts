// Thin DOM layer: renders the pure state into the page shell. The console
// input lives in index.html and is only enabled/disabled here, so typing
// survives re-renders.

import type { AppState } from "./state.js";
import { buildTraceView } from "./traceView.js";

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderConnection(target: HTMLElement, state: AppState): void {
  target.textContent = state.connection;
  target.className = `badge conn-${state.connection}`;
}

export function renderBanner(target: HTMLElement, state: AppState): void {
  target.textContent = state.banner ?? "";
  target.hidden = state.banner === null;
}

export function renderDevices(target: HTMLElement, state: AppState): void {
  target.replaceChildren();
  for (const card of state.devices) {
    const box = el("div", `device-card kind-${card.kind}`);
    box.appendChild(el("div", "device-id", card.deviceId));
    box.appendChild(el("div", "device-value", card.value));
    const meta = el("div", "device-meta", card.kind);
    if (card.pending) {
      meta.appendChild(el("span", "badge pending", "pending"));
    }
    if (state.connection === "stale") {
      meta.appendChild(el("span", "badge stale", "stale"));
    }
    box.appendChild(meta);
    target.appendChild(box);
  }
}

export function renderTraces(
  target: HTMLElement,
  state: AppState,
  openTraces: Set<string>
): void {
  target.replaceChildren();
  for (const trace of state.traces) {
    const view = buildTraceView(trace);
    const details = document.createElement("details");
    details.className = `trace status-${view.status}`;
    details.open = openTraces.has(view.traceId);
    details.addEventListener("toggle", () => {
      if (details.open) openTraces.add(view.traceId);
      else openTraces.delete(view.traceId);
    });

    const summary = document.createElement("summary");
    summary.appendChild(el("span", "trace-command", view.command));
    summary.appendChild(el("span", `badge status-${view.status}`, view.status));
    summary.appendChild(el("span", "trace-plan", view.planSummary));
    summary.appendChild(el("span", "badge timing", `${view.totalSeconds.toFixed(3)}s`));
    details.appendChild(summary);

    if (view.rawText !== null && view.repairedJson !== null) {
      const pair = el("div", "raw-vs-parsed");
      const rawPane = el("div", "pane");
      rawPane.appendChild(
        el("h4", undefined, view.repairApplied ? "raw model output (repaired below)" : "raw model output")
      );
      const rawPre = el("pre", "raw-text");
      rawPre.textContent = view.rawText; // verbatim, malformed JSON included
      rawPane.appendChild(rawPre);
      const parsedPane = el("div", "pane");
      parsedPane.appendChild(el("h4", undefined, "repaired parse"));
      const parsedPre = el("pre", "parsed-json");
      parsedPre.textContent = view.repairedJson;
      parsedPane.appendChild(parsedPre);
      pair.appendChild(rawPane);
      pair.appendChild(parsedPane);
      details.appendChild(pair);
    }

    for (const stage of view.stages) {
      const stageBox = el("div", "stage");
      const header = el("div", "stage-header");
      header.appendChild(el("span", "stage-name", stage.name));
      header.appendChild(el("span", "stage-summary", stage.summary));
      if (stage.seconds !== null) {
        header.appendChild(el("span", "badge timing", `${stage.seconds.toFixed(3)}s`));
      }
      stageBox.appendChild(header);
      const detailPre = el("pre", "stage-detail");
      detailPre.textContent = stage.detail;
      stageBox.appendChild(detailPre);
      details.appendChild(stageBox);
    }
    target.appendChild(details);
  }
}

export interface PageElements {
  connection: HTMLElement;
  banner: HTMLElement;
  devices: HTMLElement;
  traces: HTMLElement;
  input: HTMLInputElement;
  sendButton: HTMLButtonElement;
}

export function renderAll(page: PageElements, state: AppState, openTraces: Set<string>): void {
  renderConnection(page.connection, state);
  renderBanner(page.banner, state);
  renderDevices(page.devices, state);
  renderTraces(page.traces, state, openTraces);
  page.input.disabled = state.inFlight;
  page.sendButton.disabled = state.inFlight || page.input.value.trim() === "";
}
