// SessionApi against a recorded fetch stub: endpoint paths, verbs, bodies,
// and the error mapping (detail bodies become ApiError, network failures
// pass through untouched).

import { afterEach, describe, expect, it } from "vitest";
import { ApiError, SessionApi } from "../src/api";

interface Call {
  url: string;
  init?: RequestInit;
}

const realFetch = globalThis.fetch;

function stubFetch(
  responder: (url: string, init?: RequestInit) => Response,
): Call[] {
  const calls: Call[] = [];
  globalThis.fetch = ((input: unknown, init?: RequestInit) => {
    calls.push({ url: String(input), init });
    return Promise.resolve(responder(String(input), init));
  }) as typeof fetch;
  return calls;
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

afterEach(() => {
  globalThis.fetch = realFetch;
});

describe("SessionApi", () => {
  it("GETs /api/state and returns the parsed snapshot", async () => {
    const calls = stubFetch(() => json({ state_version: 3, done: false }));
    const api = new SessionApi("http://host:1/"); // trailing slash stripped
    const state = await api.state();
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("http://host:1/api/state");
    expect(calls[0].init?.method).toBeUndefined();
    expect(state.state_version).toBe(3);
  });

  it("POSTs /api/next", async () => {
    const calls = stubFetch(() =>
      json({ instance_id: "i00001", state_version: 1 }),
    );
    const card = await new SessionApi("http://host:1").next();
    expect(calls[0].url).toBe("http://host:1/api/next");
    expect(calls[0].init?.method).toBe("POST");
    expect(card.instance_id).toBe("i00001");
  });

  it("POSTs /api/label with a JSON body", async () => {
    const calls = stubFetch(() => json({ state_version: 2 }));
    await new SessionApi("http://host:1").label("i00007", "class_1");
    expect(calls[0].url).toBe("http://host:1/api/label");
    expect(calls[0].init?.method).toBe("POST");
    const headers = calls[0].init?.headers as Record<string, string>;
    expect(headers["content-type"]).toBe("application/json");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({
      instance_id: "i00007",
      label: "class_1",
    });
  });

  it("GETs /api/clusters", async () => {
    const calls = stubFetch(() => json([{ cluster_id: 0 }]));
    const rows = await new SessionApi("http://host:1").clusters();
    expect(calls[0].url).toBe("http://host:1/api/clusters");
    expect(rows).toHaveLength(1);
  });

  it("maps a detail body to ApiError with status and detail", async () => {
    stubFetch(() => json({ detail: "budget exhausted" }, 410));
    const err = await new SessionApi("http://h:1")
      .next()
      .then(() => null, (e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(410);
    expect((err as ApiError).detail).toBe("budget exhausted");
    expect((err as ApiError).message).toContain("410");
    expect((err as ApiError).message).toContain("budget exhausted");
  });

  it("falls back to the status text when the error body is not JSON", async () => {
    stubFetch(
      () => new Response("boom", { status: 502, statusText: "Bad Gateway" }),
    );
    const err = await new SessionApi("http://h:1")
      .state()
      .then(() => null, (e: unknown) => e);
    expect((err as ApiError).status).toBe(502);
    expect((err as ApiError).detail).toBe("Bad Gateway");
  });

  it("lets network failures bubble up as-is", async () => {
    globalThis.fetch = (() =>
      Promise.reject(new TypeError("fetch failed"))) as typeof fetch;
    const err = await new SessionApi("http://h:1")
      .state()
      .then(() => null, (e: unknown) => e);
    expect(err).toBeInstanceOf(TypeError);
    expect(err).not.toBeInstanceOf(ApiError);
  });

  it("returns the raw export text", async () => {
    stubFetch(() => new Response('{"events": []}\n', { status: 200 }));
    const api = new SessionApi("http://h:1");
    expect(api.exportUrl()).toBe("http://h:1/api/export");
    expect(await api.exportText()).toBe('{"events": []}\n');
  });
});
