// Session state machine behind the page.  Owns the single ViewModel, talks
// to the service, and calls `render` whenever something displayable changed.
//
// Rules it enforces:
//  * polling re-renders only when state_version increases;
//  * one mutating request at a time — buttons stay locked while busy;
//  * 409 on next and 404 on label mean the page is stale: refresh instead;
//  * 410 flips to the completion screen;
//  * 422 shows the server's message inline and keeps the card.

import type { NextCard, Toast, ViewModel, WireState } from "./types.js";

export interface SessionClient {
  state(): Promise<WireState>;
  next(): Promise<NextCard>;
  label(instanceId: string, label: string): Promise<WireState>;
}

const MAX_TOASTS = 4;

function httpStatus(err: unknown): number | null {
  const status = (err as { status?: unknown })?.status;
  return typeof status === "number" ? status : null;
}

function httpDetail(err: unknown): string {
  const detail = (err as { detail?: unknown })?.detail;
  return typeof detail === "string" ? detail : String(err);
}

export class SessionController {
  private api: SessionClient;
  private render: (vm: ViewModel) => void;
  private lastVersion = 0;
  readonly vm: ViewModel = {
    phase: "loading",
    connected: true,
    state: null,
    card: null,
    busy: false,
    inlineError: null,
    toasts: [],
    exportHref: "/api/export",
  };

  constructor(
    api: SessionClient,
    render: (vm: ViewModel) => void,
    exportHref?: string,
  ) {
    this.api = api;
    this.render = render;
    if (exportHref) this.vm.exportHref = exportHref;
  }

  private emit(): void {
    this.render(this.vm);
  }

  private adopt(state: WireState): void {
    this.lastVersion = state.state_version;
    this.vm.state = state;
    this.vm.card = state.pending;
    this.vm.phase = state.done ? "complete" : "active";
  }

  private toast(toast: Toast): void {
    this.vm.toasts = [...this.vm.toasts, toast].slice(-MAX_TOASTS);
  }

  /** Poll tick.  Cheap no-op unless the server moved or connectivity flipped. */
  async refresh(): Promise<void> {
    let state: WireState;
    try {
      state = await this.api.state();
    } catch {
      if (this.vm.connected) {
        this.vm.connected = false;
        this.emit();
      }
      return;
    }
    const reconnected = !this.vm.connected;
    this.vm.connected = true;
    if (state.state_version > this.lastVersion) {
      this.adopt(state);
      this.emit();
    } else if (reconnected) {
      this.emit();
    }
  }

  async requestNext(): Promise<void> {
    if (this.vm.busy || this.vm.card !== null) return;
    this.vm.busy = true;
    this.vm.inlineError = null;
    this.emit();
    try {
      const card = await this.api.next();
      this.lastVersion = card.state_version;
      const { state_version: _ignored, ...pending } = card;
      this.vm.card = pending;
      this.vm.phase = "active";
    } catch (err) {
      const status = httpStatus(err);
      if (status === 409) {
        await this.forceRefresh(); // someone already has a card; show it
      } else if (status === 410) {
        this.vm.phase = "complete";
        await this.forceRefresh();
      } else if (status === null) {
        this.vm.connected = false;
      } else {
        this.toast({ kind: "error", text: httpDetail(err) });
      }
    } finally {
      this.vm.busy = false;
      this.emit();
    }
  }

  async submitLabel(cls: string): Promise<void> {
    if (this.vm.busy || this.vm.card === null) return;
    const instanceId = this.vm.card.instance_id;
    const before = new Set(
      (this.vm.state?.verbalizers ?? []).map((v) => v.token_id),
    );
    this.vm.busy = true;
    this.emit();
    try {
      const state = await this.api.label(instanceId, cls);
      const gained = state.verbalizers.find((v) => !before.has(v.token_id));
      this.toast(
        gained
          ? { kind: "token", text: `token '${gained.token_id}' → class '${gained.class}'` }
          : { kind: "no-token", text: "no token assigned" },
      );
      this.vm.inlineError = null;
      this.adopt(state);
    } catch (err) {
      const status = httpStatus(err);
      if (status === 422) {
        this.vm.inlineError = httpDetail(err);
      } else if (status === 404) {
        await this.forceRefresh(); // the card went stale under us
      } else if (status === null) {
        this.vm.connected = false;
      } else {
        this.toast({ kind: "error", text: httpDetail(err) });
      }
    } finally {
      this.vm.busy = false;
      this.emit();
    }
  }

  /** Banner retry button and stale-page recovery: bypass the version gate. */
  async forceRefresh(): Promise<void> {
    try {
      const state = await this.api.state();
      this.vm.connected = true;
      this.adopt(state);
    } catch {
      this.vm.connected = false;
    }
    this.emit();
  }
}
