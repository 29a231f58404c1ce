// Thin typed client for the session service.  Non-2xx responses become
// ApiError with the server's detail string; network failures bubble up as
// whatever fetch threw, so callers can tell the two apart.

import type { ClusterRow, NextCard, WireState } from "./types.js";

export class ApiError extends Error {
  status: number;
  detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

async function unwrap<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body, keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return response.json() as Promise<T>;
}

export class SessionApi {
  base: string;

  constructor(base: string) {
    this.base = base.replace(/\/$/, "");
  }

  state(): Promise<WireState> {
    return fetch(`${this.base}/api/state`).then((r) => unwrap<WireState>(r));
  }

  next(): Promise<NextCard> {
    return fetch(`${this.base}/api/next`, { method: "POST" }).then((r) =>
      unwrap<NextCard>(r),
    );
  }

  label(instanceId: string, label: string): Promise<WireState> {
    return fetch(`${this.base}/api/label`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ instance_id: instanceId, label }),
    }).then((r) => unwrap<WireState>(r));
  }

  clusters(): Promise<ClusterRow[]> {
    return fetch(`${this.base}/api/clusters`).then((r) =>
      unwrap<ClusterRow[]>(r),
    );
  }

  exportUrl(): string {
    return `${this.base}/api/export`;
  }

  async exportText(): Promise<string> {
    const r = await fetch(this.exportUrl());
    if (!r.ok) throw new ApiError(r.status, r.statusText);
    return r.text();
  }
}
