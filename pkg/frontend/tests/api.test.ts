import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, GatewayApi } from "../src/api.js";
import { sleepTrace } from "./fixtures.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("GatewayApi", () => {
  it("posts commands with session id and text", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(sleepTrace()));
    vi.stubGlobal("fetch", fetchMock);

    const trace = await new GatewayApi("http://gw").submitCommand("s1", "sleep now");
    expect(trace.trace_id).toBe("t1");
    expect(fetchMock).toHaveBeenCalledWith("http://gw/command", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: "s1", text: "sleep now" }),
    });
  });

  it("fetches devices and traces from the documented paths", async () => {
    const fetchMock = vi.fn(async (url: string) =>
      url.endsWith("/devices") ? jsonResponse([]) : jsonResponse([sleepTrace()])
    );
    vi.stubGlobal("fetch", fetchMock);

    const api = new GatewayApi("");
    await api.getDevices();
    await api.listTraces("s1");
    expect(fetchMock.mock.calls.map((c) => c[0])).toEqual([
      "/devices",
      "/traces?session=s1",
    ]);
  });

  it("raises ApiError with the gateway's detail message", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => jsonResponse({ detail: "no trace 'nope'" }, 404))
    );
    await expect(new GatewayApi("").getTrace("nope")).rejects.toThrowError(ApiError);
    await expect(new GatewayApi("").getTrace("nope")).rejects.toThrow("no trace 'nope'");
  });

  it("falls back to the status text for non-JSON error bodies", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => new Response("boom", { status: 500, statusText: "Server Error" }))
    );
    await expect(new GatewayApi("").getDevices()).rejects.toThrow("Server Error");
  });
});
