// Live feed: SSE subscription with a 2-second polling fallback.
//
// The EventSource implementation is injected so tests (and non-browser
// environments) can supply their own. When the stream drops we flag degraded
// mode and poll the REST API until the stream reconnects.

import type { ApiClient } from "./api.js";
import type { Alarm, Availability, DeviceInfo } from "./types.js";

export interface EventSourceLike {
  addEventListener(type: string, listener: (ev: { data: string }) => void): void;
  close(): void;
  // `any` keeps the DOM EventSource assignable (its handlers take Event)
  onerror: ((ev: any) => void) | null;
  onopen: ((ev: any) => void) | null;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface LiveHandlers {
  onDevice: (device: DeviceInfo) => void;
  onNodeStatus: (node: string, availability: Availability) => void;
  onAlarm: (alarm: Alarm) => void;
  onDegraded: (degraded: boolean) => void;
}

const POLL_INTERVAL_MS = 2000;

export class LiveFeed {
  private source: EventSourceLike | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private stopped = false;

  constructor(
    private api: ApiClient,
    private handlers: LiveHandlers,
    private makeSource: EventSourceFactory,
  ) {}

  start(): void {
    this.stopped = false;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    this.source?.close();
    this.source = null;
    this.stopPolling();
  }

  private connect(): void {
    if (this.stopped) return;
    let source: EventSourceLike;
    try {
      source = this.makeSource(this.api.streamUrl());
    } catch {
      this.degrade();
      return;
    }
    this.source = source;
    source.onopen = () => {
      this.stopPolling();
      this.handlers.onDegraded(false);
    };
    source.onerror = () => {
      source.close();
      if (this.source === source) this.source = null;
      this.degrade();
    };
    source.addEventListener("device-update", (ev) => {
      this.handlers.onDevice(JSON.parse(ev.data) as DeviceInfo);
    });
    source.addEventListener("node-status", (ev) => {
      const data = JSON.parse(ev.data) as { node: string; availability: Availability };
      this.handlers.onNodeStatus(data.node, data.availability);
    });
    source.addEventListener("alarm", (ev) => {
      this.handlers.onAlarm(JSON.parse(ev.data) as Alarm);
    });
  }

  /** Stream is down: surface the banner, poll, and keep trying to reconnect. */
  private degrade(): void {
    if (this.stopped || this.pollTimer !== null) return;
    this.handlers.onDegraded(true);
    this.pollTimer = setInterval(() => {
      void this.pollOnce();
      if (this.source === null) this.connect();
    }, POLL_INTERVAL_MS);
  }

  private stopPolling(): void {
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
  }

  async pollOnce(): Promise<void> {
    try {
      const [devices, nodes, alarms] = await Promise.all([
        this.api.devices(),
        this.api.nodes(),
        this.api.alarms(),
      ]);
      for (const device of devices) this.handlers.onDevice(device);
      for (const node of nodes) this.handlers.onNodeStatus(node.node, node.availability);
      for (const alarm of alarms) this.handlers.onAlarm(alarm);
    } catch {
      // API unreachable too: stay degraded, keep polling
    }
  }
}
