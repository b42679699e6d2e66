// REST client for the gateway; throws ApiError with the HTTP status on failure.

import type { DeviceInfo, TraceDict } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function toJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // keep statusText
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class GatewayApi {
  constructor(private baseUrl: string = "") {}

  async submitCommand(sessionId: string, text: string): Promise<TraceDict> {
    const response = await fetch(`${this.baseUrl}/command`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, text }),
    });
    return toJson<TraceDict>(response);
  }

  async getDevices(): Promise<DeviceInfo[]> {
    return toJson<DeviceInfo[]>(await fetch(`${this.baseUrl}/devices`));
  }

  async listTraces(sessionId?: string): Promise<TraceDict[]> {
    const query = sessionId ? `?session=${encodeURIComponent(sessionId)}` : "";
    return toJson<TraceDict[]>(await fetch(`${this.baseUrl}/traces${query}`));
  }

  async getTrace(traceId: string): Promise<TraceDict> {
    return toJson<TraceDict>(await fetch(`${this.baseUrl}/traces/${traceId}`));
  }

  async getHealth(): Promise<Record<string, unknown>> {
    return toJson(await fetch(`${this.baseUrl}/health`));
  }
}
