// Orchestration between the API, the event stream, and the pure state.
// Everything injectable (API, EventSource factory, scheduler) so the full
// console/stream flow is testable without a browser.

import { GatewayApi, ApiError } from "./api.js";
import {
  AppState,
  applyDevices,
  applyEvent,
  beginSubmit,
  failSubmit,
  finishSubmit,
  initialState,
  setConnection,
} from "./state.js";
import type { GatewayEvent } from "./types.js";

export interface EventSourceLike {
  onmessage: ((event: { data: string }) => void) | null;
  onerror: ((event: unknown) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;
export type Scheduler = (fn: () => void, delayMs: number) => void;

export interface ControllerOptions {
  sessionId: string;
  api: GatewayApi;
  eventSourceFactory: EventSourceFactory;
  onChange: (state: AppState) => void;
  schedule?: Scheduler;
  reconnectDelayMs?: number;
}

export class AppController {
  state: AppState = initialState();
  private source: EventSourceLike | null = null;
  private readonly schedule: Scheduler;
  private readonly reconnectDelayMs: number;
  private stopped = false;

  constructor(private readonly options: ControllerOptions) {
    this.schedule = options.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.reconnectDelayMs = options.reconnectDelayMs ?? 2000;
  }

  private update(next: AppState): void {
    this.state = next;
    this.options.onChange(next);
  }

  async start(): Promise<void> {
    this.connectStream();
    await this.refreshDevices();
  }

  stop(): void {
    this.stopped = true;
    this.source?.close();
    this.source = null;
  }

  async refreshDevices(): Promise<void> {
    try {
      const listing = await this.options.api.getDevices();
      this.update(applyDevices(this.state, listing));
    } catch (error) {
      this.update(failSubmit(this.state, `gateway unreachable: ${describe(error)}`));
    }
  }

  private connectStream(): void {
    if (this.stopped) return;
    const source = this.options.eventSourceFactory("/events");
    this.source = source;
    source.onmessage = (message) => {
      if (this.state.connection !== "live") {
        this.update(setConnection(this.state, "live"));
      }
      let event: GatewayEvent;
      try {
        event = JSON.parse(message.data) as GatewayEvent;
      } catch {
        return;
      }
      this.update(applyEvent(this.state, event));
    };
    source.onerror = () => {
      source.close();
      if (this.stopped) return;
      // stale badge until the stream is back, then refresh from /devices
      this.update(setConnection(this.state, "stale"));
      this.schedule(() => {
        this.connectStream();
        void this.refreshDevices();
      }, this.reconnectDelayMs);
    };
    // the stream is considered live once it is open and delivering; mark
    // optimistically so a quiet gateway doesn't look stale forever
    this.update(setConnection(this.state, "live"));
  }

  /** Console submit: one command in flight per session; empty input ignored. */
  async submit(text: string): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed || this.state.inFlight) return;
    this.update(beginSubmit(this.state));
    try {
      const trace = await this.options.api.submitCommand(this.options.sessionId, trimmed);
      this.update(finishSubmit(this.state, trace));
    } catch (error) {
      if (error instanceof ApiError) {
        this.update(failSubmit(this.state, `gateway answered ${error.status}: ${error.message}`));
      } else {
        this.update(failSubmit(this.state, `connection error: ${describe(error)}`));
      }
    }
  }
}

function describe(error: unknown): string {
  return error instanceof Error ? error.message : String(error);
}
