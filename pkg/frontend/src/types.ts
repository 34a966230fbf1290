// API payload shapes, mirroring the cloud node's JSON projections.

export type Availability = "online" | "offline";

export interface NodeStatus {
  node: string;
  availability: Availability;
  last_heartbeat: number;
  seq: number;
  slots: { total: number; free: number };
}

export type WirePayload =
  | { kind: "series"; points: Array<[number, number[]]> }
  | { kind: "sum" | "average" | "last"; values: number[] }
  | { kind: "phasor"; channels: Array<[number, number, number]> };

export interface DeviceInfo {
  edge: string;
  device: string;
  roles: string[];
  kind: string;
  channels: number;
  availability: Availability;
  last_heartbeat: number;
  last_update: number;
  payload: WirePayload | null;
}

export interface Alarm {
  id: string;
  severity: "info" | "warning" | "critical";
  source: string;
  message: string;
  timestamp: number;
  acknowledged: boolean;
}

export interface SeriesResponse {
  key: string;
  points: Array<[number, number]>;
}

export interface ActuateResult {
  delivered: boolean;
  reason: string | null;
}

export type StreamEvent =
  | { event: "device-update"; data: DeviceInfo }
  | { event: "node-status"; data: { node: string; availability: Availability } }
  | { event: "alarm"; data: Alarm }
  | { event: "actuation-ack"; data: Record<string, unknown> };
