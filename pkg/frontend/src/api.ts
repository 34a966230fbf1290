// REST client for the cloud node. Every request this module can make maps
// onto one of the documented endpoints; the contract test enforces that.

import type {
  ActuateResult,
  Alarm,
  DeviceInfo,
  NodeStatus,
  SeriesResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private base: string,
    private token?: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private headers(json = false): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h["Content-Type"] = "application/json";
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.base}${path}`, { headers: this.headers() });
    if (!resp.ok) throw new ApiError(resp.status, `GET ${path} -> ${resp.status}`);
    return (await resp.json()) as T;
  }

  private async post<T>(path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchImpl(`${this.base}${path}`, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify(body ?? {}),
    });
    if (!resp.ok) throw new ApiError(resp.status, `POST ${path} -> ${resp.status}`);
    return (await resp.json()) as T;
  }

  nodes(): Promise<NodeStatus[]> {
    return this.get("/api/nodes");
  }

  devices(): Promise<DeviceInfo[]> {
    return this.get("/api/devices");
  }

  device(edge: string, label: string): Promise<DeviceInfo> {
    return this.get(`/api/devices/${encodeURIComponent(edge)}/${encodeURIComponent(label)}`);
  }

  /** All numeric reduction happens server-side: maxPoints caps the response. */
  series(key: string, t0: number, t1: number, maxPoints: number): Promise<SeriesResponse> {
    const params = new URLSearchParams({
      key,
      t0: String(Math.floor(t0)),
      t1: String(Math.floor(t1)),
      max_points: String(Math.max(1, Math.floor(maxPoints))),
    });
    return this.get(`/api/series?${params.toString()}`);
  }

  alarms(): Promise<Alarm[]> {
    return this.get("/api/alarms");
  }

  acknowledge(id: string): Promise<Alarm> {
    return this.post(`/api/alarms/${encodeURIComponent(id)}/ack`);
  }

  actuate(edge: string, actuator: string, command: Record<string, unknown>): Promise<ActuateResult> {
    return this.post("/api/actuate", { edge, actuator, command });
  }

  streamUrl(): string {
    return `${this.base}/api/stream`;
  }
}
