// View-model helpers: how a device card presents its payload and freshness.

import type { DeviceInfo, WirePayload } from "./types.js";

export interface DeviceCardModel {
  key: string;
  title: string;
  subtitle: string;
  offline: boolean;
  payloadText: string;
  sparkValues: number[] | null;
  ageText: string;
  primarySeriesKey: string | null;
}

/** Phasor payloads display amplitude and phase, never a raw series. */
export function payloadText(payload: WirePayload | null): string {
  if (payload === null) return "no data yet";
  if (payload.kind === "phasor") {
    return payload.channels
      .map(([a, phi]) => `${formatNumber(a)} ∠ ${formatNumber(phi)} rad`)
      .join("  ");
  }
  if (payload.kind === "series") {
    const last = payload.points[payload.points.length - 1];
    return last ? `${payload.points.length} pts, last ${last[1].map(formatNumber).join(", ")}` : "empty window";
  }
  return `${payload.kind}: ${payload.values.map(formatNumber).join(", ")}`;
}

export function formatNumber(x: number): string {
  if (!Number.isFinite(x)) return String(x);
  const abs = Math.abs(x);
  if (abs !== 0 && (abs >= 1e6 || abs < 1e-3)) return x.toExponential(2);
  return (Math.round(x * 1000) / 1000).toString();
}

export function ageText(nowNs: number, thenNs: number): string {
  if (thenNs <= 0) return "never";
  const seconds = Math.max(0, (nowNs - thenNs) / 1e9);
  if (seconds < 1) return "just now";
  if (seconds < 60) return `${Math.round(seconds)}s ago`;
  if (seconds < 3600) return `${Math.round(seconds / 60)}m ago`;
  return `${Math.round(seconds / 3600)}h ago`;
}

export function sparkValues(payload: WirePayload | null): number[] | null {
  if (payload === null || payload.kind !== "series") return null;
  return payload.points.map(([, values]) => values[0]);
}

/** Series key of the card's first channel, as the store names it. */
export function primarySeriesKey(device: DeviceInfo): string | null {
  if (!device.roles.includes("sensor")) return null;
  const channel = device.payload?.kind === "phasor" ? "0:amp" : "0";
  return `${device.edge}.${device.device}.${channel}`;
}

export function deviceCard(device: DeviceInfo, nowNs: number): DeviceCardModel {
  return {
    key: `${device.edge}/${device.device}`,
    title: device.device,
    subtitle: `${device.kind} @ ${device.edge} (${device.roles.join("+")})`,
    offline: device.availability === "offline",
    payloadText: payloadText(device.payload),
    sparkValues: sparkValues(device.payload),
    ageText: ageText(nowNs, device.last_update),
    primarySeriesKey: primarySeriesKey(device),
  };
}
