/** Event-stream client: tracks the last delivered event id, reconnects with
 * it so the server can replay the missed window, and surfaces explicit gap
 * markers (or silent id jumps) as a "stale" signal that forces a full
 * refresh upstream. The EventSource constructor is injectable for tests. */

import type { PushEventBody, PushKind } from "./types.js";

export const PUSH_KINDS: PushKind[] = [
  "reading",
  "alert.opened",
  "alert.escalated",
  "alert.acked",
  "alert.resolved",
  "light.changed",
  "forecast.updated",
  "gap",
];

export interface StreamHandlers {
  onEvent: (kind: PushKind, body: PushEventBody, eventId: number) => void;
  /** Stream is consistent again only after the caller does a full refresh. */
  onGap: () => void;
  onConnectionChange: (connected: boolean) => void;
}

export interface EventSourceLike {
  addEventListener(type: string, handler: (ev: MessageEvent) => void): void;
  close(): void;
  onerror: ((ev: unknown) => void) | null;
  onopen: ((ev: unknown) => void) | null;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export class StreamClient {
  private source: EventSourceLike | null = null;
  lastEventId: number | undefined;

  constructor(
    private urlFor: (lastEventId?: number) => string,
    private handlers: StreamHandlers,
    private factory: EventSourceFactory = (url) =>
      new EventSource(url) as unknown as EventSourceLike,
  ) {}

  connect(): void {
    this.close();
    const source = this.factory(this.urlFor(this.lastEventId));
    this.source = source;
    source.onopen = () => this.handlers.onConnectionChange(true);
    source.onerror = () => this.handlers.onConnectionChange(false);
    for (const kind of PUSH_KINDS) {
      source.addEventListener(kind, (ev) => this.dispatch(kind, ev));
    }
  }

  private dispatch(kind: PushKind, ev: MessageEvent): void {
    const id = Number(ev.lastEventId);
    if (kind === "gap") {
      // the server could not replay everything we missed
      this.lastEventId = undefined;
      this.handlers.onGap();
      return;
    }
    if (
      this.lastEventId !== undefined &&
      Number.isFinite(id) &&
      id > this.lastEventId + 1
    ) {
      // ids must be contiguous; a jump means something was dropped
      this.lastEventId = id;
      this.handlers.onGap();
      return;
    }
    if (Number.isFinite(id)) this.lastEventId = id;
    let body: PushEventBody;
    try {
      body = JSON.parse(ev.data) as PushEventBody;
    } catch {
      return; // malformed frame: skip
    }
    this.handlers.onEvent(kind, body, id);
  }

  close(): void {
    if (this.source) {
      this.source.close();
      this.source = null;
    }
  }
}
