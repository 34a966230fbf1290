"""The cloud runtime: virtual device registry, time-series store, alarms, API.

The cloud subscribes to every edge's sensor stream, heartbeats, alarms and
actuation acks. Heartbeats introduce devices (building VirtualDeviceState
mirrors and tracking free executor slots); measurements refresh the mirrors
and append expanded points to the embedded time-series store; configured
threshold rules raise alarms. A REST API plus a server-sent-event stream
expose the registry, series queries, the alarm log and manual actuation.
"""

from __future__ import annotations

import argparse
import bisect
import http.server
import json
import logging
import queue as queue_mod
import sys
import threading
import time
import urllib.parse
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import messaging
from .aggregation import PhasorPayload, ScalarPayload, SeriesPayload
from .clock import WallClock
from .config import AlarmRuleConfig, NodeConfig, load_config
from .model import Availability, DeviceDescriptor, VirtualDeviceState, mark_availability

log = logging.getLogger(__name__)

MS = 1_000_000

SEVERITIES = ("info", "warning", "critical")


class UnknownAlarmError(KeyError):
    """Acknowledge called with an id that was never raised."""


# --- time-series store --------------------------------------------------------


class TimeSeriesStore:
    """Append-only in-memory series with optional line-file persistence.

    One record per line: `series<TAB>timestamp_ns<TAB>value`. Appends become
    durable on flush (every `flush_every` records or an explicit flush()).
    Retention drops records older than the horizon from the queryable index;
    the log is compacted on flush.
    """

    def __init__(self, path: Optional[str] = None, flush_every: int = 1000,
                 retention_ns: Optional[int] = None):
        self._series: Dict[str, list] = {}
        self._lock = threading.Lock()
        self._path = Path(path) if path else None
        self._flush_every = flush_every
        self._retention_ns = retention_ns
        self._unflushed = 0
        if self._path is not None and self._path.exists():
            self._load()

    def _load(self) -> None:
        with self._path.open("r", encoding="utf-8") as fh:
            for line in fh:
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    continue
                key, ts, value = parts
                self._series.setdefault(key, []).append((int(ts), float(value)))
        for records in self._series.values():
            records.sort()
        self._apply_retention()

    def _apply_retention(self) -> None:
        if self._retention_ns is None:
            return
        horizon = self._latest_ts() - self._retention_ns
        for key, records in self._series.items():
            idx = 0
            while idx < len(records) and records[idx][0] < horizon:
                idx += 1
            if idx:
                self._series[key] = records[idx:]

    def _latest_ts(self) -> int:
        latest = 0
        for records in self._series.values():
            if records:
                latest = max(latest, records[-1][0])
        return latest

    def append(self, key: str, ts: int, value: float) -> None:
        with self._lock:
            records = self._series.setdefault(key, [])
            if records and ts < records[-1][0]:
                # out-of-order arrival: keep the index sorted
                bisect.insort(records, (ts, value))
            else:
                records.append((ts, value))
            self._unflushed += 1
            self._apply_retention()
            if self._unflushed >= self._flush_every:
                self._flush_locked()

    def flush(self) -> None:
        with self._lock:
            self._flush_locked()

    def _flush_locked(self) -> None:
        self._unflushed = 0
        if self._path is None:
            return
        tmp = self._path.with_suffix(self._path.suffix + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            for key in sorted(self._series):
                for ts, value in self._series[key]:
                    fh.write(f"{key}\t{ts}\t{value!r}\n")
        tmp.replace(self._path)

    def keys(self) -> list:
        with self._lock:
            return sorted(self._series)

    def query(self, key: str, t0: int, t1: int, max_points: int = 10_000) -> list:
        """Sorted records in [t0, t1]; above max_points, bucketed means."""
        if t0 > t1:
            raise ValueError("t0 must be <= t1")
        if max_points < 1:
            raise ValueError("max_points must be >= 1")
        with self._lock:
            records = list(self._series.get(key, ()))
        selected = [(ts, v) for ts, v in records if t0 <= ts <= t1]
        if len(selected) <= max_points:
            return selected
        buckets = np.array_split(np.asarray(selected, dtype=float), max_points)
        out = []
        for bucket in buckets:
            if bucket.size == 0:
                continue
            out.append((int(bucket[:, 0].mean()), float(bucket[:, 1].mean())))
        return out


# --- alarms ---------------------------------------------------------------------


@dataclass
class AlarmRecord:
    id: str
    severity: str
    source: str
    message: str
    timestamp: int
    acknowledged: bool = False

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "severity": self.severity,
            "source": self.source,
            "message": self.message,
            "timestamp": self.timestamp,
            "acknowledged": self.acknowledged,
        }


class AlarmLog:
    def __init__(self, clock=None):
        self._clock = clock or WallClock()
        self._records: Dict[str, AlarmRecord] = {}
        self._order: List[str] = []
        self._next = 1
        self._lock = threading.Lock()

    def raise_alarm(self, severity: str, source: str, message: str,
                    ts: Optional[int] = None) -> AlarmRecord:
        if severity not in SEVERITIES:
            raise ValueError(f"severity must be one of {SEVERITIES}")
        with self._lock:
            record = AlarmRecord(
                id=f"a-{self._next}",
                severity=severity,
                source=source,
                message=message,
                timestamp=ts if ts is not None else self._clock.now_ns(),
            )
            self._next += 1
            self._records[record.id] = record
            self._order.append(record.id)
        return record

    def acknowledge(self, alarm_id: str) -> AlarmRecord:
        with self._lock:
            record = self._records.get(alarm_id)
            if record is None:
                raise UnknownAlarmError(alarm_id)
            record.acknowledged = True  # idempotent: false -> true only
            return record

    def list(self, unacknowledged_only: bool = False) -> list:
        with self._lock:
            records = [self._records[i] for i in self._order]
        if unacknowledged_only:
            records = [r for r in records if not r.acknowledged]
        return records


# --- virtual registry -------------------------------------------------------------


@dataclass
class NodeState:
    label: str
    availability: Availability = Availability.ONLINE
    last_heartbeat: int = 0
    seq: int = 0
    total_slots: int = 1
    free_slots: int = 1


@dataclass
class IngestDelta:
    """What one frame changed, for tests and the event stream."""

    kind: str
    node: Optional[str] = None
    devices: tuple = ()
    appended: int = 0
    alarms: tuple = ()
    quarantined: bool = False


def series_key(edge: str, device: str, channel: str) -> str:
    return f"{edge}.{device}.{channel}"


class CloudNode:
    """Cloud-side runtime fed by broker subscriptions."""

    def __init__(self, config: NodeConfig, plane=None, clock=None,
                 store_path: Optional[str] = None, retention_ns: Optional[int] = None):
        if config.node_type != "cloud":
            raise ValueError("CloudNode needs a cloud configuration")
        self.config = config
        self.label = config.label
        self.clock = clock or WallClock()
        self.plane = plane
        self.store = TimeSeriesStore(store_path, retention_ns=retention_ns)
        self.alarms = AlarmLog(clock=self.clock)
        self.registry: Dict[str, Dict[str, VirtualDeviceState]] = {}
        self.nodes: Dict[str, NodeState] = {}
        self.quarantine: List[str] = []
        self._rules = list(config.alarms)
        self._lock = threading.Lock()
        self._listeners: List = []  # event-stream queues
        self._threads: List[threading.Thread] = []
        self._stopping = threading.Event()
        self._subs: list = []
        self.miss_threshold_ns = int(3 * config.heartbeat_interval_ms * MS)

    # --- event stream ---

    def listen(self):
        q = queue_mod.Queue()
        with self._lock:
            self._listeners.append(q)
        return q

    def unlisten(self, q) -> None:
        with self._lock:
            if q in self._listeners:
                self._listeners.remove(q)

    def _emit(self, event: str, data: dict) -> None:
        with self._lock:
            listeners = list(self._listeners)
        for q in listeners:
            q.put({"event": event, "data": data})

    # --- ingestion ---

    def ingest(self, frame) -> IngestDelta:
        if frame.type == "heartbeat":
            return self._ingest_heartbeat(frame)
        if frame.type == "measurement":
            return self._ingest_measurement(frame)
        if frame.type == "alarm":
            return self._ingest_alarm(frame)
        if frame.type == "actuation-ack":
            self._emit("actuation-ack", {"key": frame.key, **frame.payload})
            return IngestDelta(kind="actuation-ack")
        return IngestDelta(kind="ignored")

    def _ingest_heartbeat(self, frame) -> IngestDelta:
        p = frame.payload
        label = p["node"]
        with self._lock:
            node = self.nodes.get(label)
            if node is None:
                node = NodeState(label=label)
                self.nodes[label] = node
            was_offline = node.availability is Availability.OFFLINE
            node.availability = Availability.ONLINE
            node.last_heartbeat = frame.ts
            node.seq = p.get("seq", node.seq + 1)
            slots = p.get("slots", {})
            node.total_slots = slots.get("total", node.total_slots)
            node.free_slots = slots.get("free", node.free_slots)
            devices = self.registry.setdefault(label, {})
            changed = []
            for summary in p.get("devices", []):
                dev_label = summary["label"]
                state = devices.get(dev_label)
                if state is None:
                    descriptor = DeviceDescriptor(
                        label=dev_label,
                        roles=set(summary.get("roles", ["sensor"])),
                        kind=summary.get("kind", "device"),
                        driver="remote",
                        channels=summary.get("channels", 1),
                    )
                    state = VirtualDeviceState(descriptor=descriptor, owner=label)
                    devices[dev_label] = state
                    changed.append(dev_label)
                elif state.availability is not Availability.ONLINE:
                    changed.append(dev_label)  # device came back with its node
                state.last_heartbeat = frame.ts
                state.availability = Availability.ONLINE
        if was_offline:
            self._emit("node-status", {"node": label, "availability": "online"})
        for dev in changed:
            self._emit("device-update", self.device_json(label, dev))
        return IngestDelta(kind="heartbeat", node=label, devices=tuple(changed))

    def _ingest_measurement(self, frame) -> IngestDelta:
        edge, device = self._parse_sensor_key(frame.key)
        with self._lock:
            known = edge in self.registry and device in self.registry[edge]
        if not known:
            self.quarantine.append(frame.key)
            record = self.alarms.raise_alarm(
                "warning", frame.key, "measurement from unknown device quarantined",
                ts=frame.ts,
            )
            self._emit("alarm", record.to_json())
            return IngestDelta(kind="measurement", quarantined=True, alarms=(record.id,))

        payload = messaging.payload_from_wire(frame.payload)
        appended = 0
        triggered: list = []
        if isinstance(payload, SeriesPayload):
            for ts, values in payload.points:
                for c, value in enumerate(values):
                    key = series_key(edge, device, str(c))
                    self.store.append(key, ts, value)
                    appended += 1
                    triggered.extend(self._check_rules(key, ts, value))
        elif isinstance(payload, ScalarPayload):
            for c, value in enumerate(payload.values):
                key = series_key(edge, device, str(c))
                self.store.append(key, frame.ts, value)
                appended += 1
                triggered.extend(self._check_rules(key, frame.ts, value))
        elif isinstance(payload, PhasorPayload):
            for c, ph in enumerate(payload.channels):
                for suffix, value in (("amp", ph.amplitude), ("phase", ph.phase)):
                    key = series_key(edge, device, f"{c}:{suffix}")
                    self.store.append(key, frame.ts, value)
                    appended += 1
                    triggered.extend(self._check_rules(key, frame.ts, value))

        with self._lock:
            state = self.registry[edge][device]
            state.last_payload = payload
            state.last_update = frame.ts
        self._emit("device-update", self.device_json(edge, device))
        return IngestDelta(
            kind="measurement", node=edge, devices=(device,), appended=appended,
            alarms=tuple(triggered),
        )

    def _ingest_alarm(self, frame) -> IngestDelta:
        p = frame.payload
        record = self.alarms.raise_alarm(
            p.get("severity", "warning"), p.get("source", frame.key),
            p.get("message", ""), ts=frame.ts,
        )
        self._emit("alarm", record.to_json())
        return IngestDelta(kind="alarm", alarms=(record.id,))

    def _check_rules(self, key: str, ts: int, value: float) -> list:
        triggered = []
        for rule in self._rules:
            if not messaging.key_matches(rule.series, key) and rule.series != key:
                continue
            breached = (rule.above is not None and value > rule.above) or (
                rule.below is not None and value < rule.below
            )
            if breached:
                message = rule.message or (
                    f"{key} value {value:g} breached "
                    f"{'>' + str(rule.above) if rule.above is not None else '<' + str(rule.below)}"
                )
                record = self.alarms.raise_alarm(rule.severity, key, message, ts=ts)
                self._emit("alarm", record.to_json())
                triggered.append(record.id)
        return triggered

    @staticmethod
    def _parse_sensor_key(key: str) -> tuple:
        parts = key.split(".")
        if len(parts) != 4 or parts[0] != "edge" or parts[2] != "sensors":
            raise messaging.RoutingKeyError(f"not a sensor key: {key!r}")
        return parts[1], parts[3]

    # --- availability sweep ---

    def sweep_availability(self, now: Optional[int] = None) -> list:
        """Mark nodes/devices offline when heartbeats stop; returns transitions."""
        now = now if now is not None else self.clock.now_ns()
        flipped = []
        with self._lock:
            for node in self.nodes.values():
                before = node.availability
                after = (
                    Availability.OFFLINE
                    if now - node.last_heartbeat > self.miss_threshold_ns
                    else Availability.ONLINE
                )
                node.availability = after
                if before is not after:
                    flipped.append((node.label, after))
                for state in self.registry.get(node.label, {}).values():
                    mark_availability(state, now, self.miss_threshold_ns)
        for label, availability in flipped:
            self._emit("node-status", {"node": label, "availability": availability.value})
            for dev in self.registry.get(label, {}):
                self._emit("device-update", self.device_json(label, dev))
        return flipped

    # --- actuation via API ---

    def actuate(self, edge: str, actuator: str, command: dict) -> messaging.Ack:
        with self._lock:
            known = edge in self.registry and actuator in self.registry[edge]
        if not known:
            raise KeyError(f"unknown actuator {edge}/{actuator}")
        if self.plane is None:
            return messaging.Ack(delivered=False, reason="no message plane")
        ack = self.plane.send_actuation(edge, actuator, command, ts=self.clock.now_ns())
        record = self.alarms.raise_alarm(
            "info", f"{edge}/{actuator}",
            f"manual actuation {command} -> {'delivered' if ack.delivered else 'undeliverable'}",
        )
        self._emit("alarm", record.to_json())
        return ack

    # --- JSON projections ---

    def node_json(self, label: str) -> dict:
        node = self.nodes[label]
        return {
            "node": node.label,
            "availability": node.availability.value,
            "last_heartbeat": node.last_heartbeat,
            "seq": node.seq,
            "slots": {"total": node.total_slots, "free": node.free_slots},
        }

    def device_json(self, edge: str, label: str) -> dict:
        state = self.registry[edge][label]
        payload = None
        if state.last_payload is not None:
            payload = messaging.payload_to_wire(state.last_payload)
        return {
            "edge": edge,
            "device": label,
            "roles": sorted(r.value for r in state.descriptor.roles),
            "kind": state.descriptor.kind,
            "channels": state.descriptor.channels,
            "availability": state.availability.value,
            "last_heartbeat": state.last_heartbeat,
            "last_update": state.last_update,
            "payload": payload,
        }

    def devices_json(self) -> list:
        with self._lock:
            pairs = [(e, d) for e, devs in self.registry.items() for d in devs]
        return [self.device_json(e, d) for e, d in pairs]

    # --- service wiring ---

    def start(self) -> "CloudNode":
        if self.plane is None:
            raise ValueError("cloud node needs a message plane to start")
        patterns = [
            "edge.*.sensors.*",
            "edge.*.heartbeat",
            "edge.*.alarms",
            "edge.*.acks.*",
        ]
        for pattern in patterns:
            sub = self.plane.subscribe(pattern)
            self._subs.append(sub)
            thread = threading.Thread(target=self._pump, args=(sub,), daemon=True)
            thread.start()
            self._threads.append(thread)
        monitor = threading.Thread(target=self._monitor, daemon=True)
        monitor.start()
        self._threads.append(monitor)
        return self

    def stop(self) -> None:
        self._stopping.set()
        for sub in self._subs:
            sub.close()
        self.store.flush()

    def _pump(self, sub) -> None:
        while not self._stopping.is_set():
            frame = sub.get(timeout=0.1)
            if frame is None:
                continue
            try:
                self.ingest(frame)
            except Exception:
                log.exception("ingest failed for %s", frame.key)

    def _monitor(self) -> None:
        period = max(0.05, self.config.heartbeat_interval_ms / 2e3)
        while not self._stopping.is_set():
            time.sleep(period)
            try:
                self.sweep_availability()
            except Exception:
                log.exception("availability sweep failed")


# --- REST + SSE API ----------------------------------------------------------------


class CloudApiServer:
    """Threaded HTTP server exposing the cloud node."""

    def __init__(self, cloud: CloudNode, host: str = "127.0.0.1", port: int = 0,
                 static_dir: Optional[str] = None):
        self.cloud = cloud
        self.static_dir = Path(static_dir) if static_dir else None
        handler = _make_handler(cloud, self.static_dir)
        self._server = http.server.ThreadingHTTPServer((host, port), handler)
        self._server.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple:
        return self._server.server_address

    def start(self) -> "CloudApiServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()


def _make_handler(cloud: CloudNode, static_dir: Optional[Path]):
    token = cloud.config.api_token

    class Handler(http.server.BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            log.debug("http: " + fmt, *args)

        def _json(self, status: int, body) -> None:
            data = json.dumps(body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(data)

        def _authorized(self) -> bool:
            if token is None:
                return True
            header = self.headers.get("Authorization", "")
            return header == f"Bearer {token}"

        def do_OPTIONS(self):
            # CORS preflight: the dashboard may be served from another origin
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            parsed = urllib.parse.urlparse(self.path)
            parts = [urllib.parse.unquote(p) for p in parsed.path.split("/") if p]
            query = urllib.parse.parse_qs(parsed.query)
            try:
                if parts[:2] == ["api", "nodes"]:
                    self._json(200, [cloud.node_json(n) for n in sorted(cloud.nodes)])
                elif parts[:2] == ["api", "devices"] and len(parts) == 2:
                    self._json(200, cloud.devices_json())
                elif parts[:2] == ["api", "devices"] and len(parts) == 4:
                    self._json(200, cloud.device_json(parts[2], parts[3]))
                elif parts[:2] == ["api", "series"]:
                    key = query.get("key", [""])[0]
                    t0 = int(query.get("t0", ["0"])[0])
                    t1 = int(query.get("t1", [str(2**62)])[0])
                    max_points = int(query.get("max_points", ["1000"])[0])
                    points = cloud.store.query(key, t0, t1, max_points)
                    self._json(200, {"key": key, "points": points})
                elif parts[:2] == ["api", "alarms"] and len(parts) == 2:
                    self._json(200, [r.to_json() for r in cloud.alarms.list()])
                elif parts[:2] == ["api", "stream"]:
                    self._stream()
                elif static_dir is not None:
                    self._static(parts)
                else:
                    self._json(404, {"error": "not found"})
            except KeyError as e:
                self._json(404, {"error": str(e)})
            except (ValueError, messaging.RoutingKeyError) as e:
                self._json(400, {"error": str(e)})
            except (BrokenPipeError, ConnectionResetError):
                pass

        def do_POST(self):
            parsed = urllib.parse.urlparse(self.path)
            parts = [urllib.parse.unquote(p) for p in parsed.path.split("/") if p]
            # consume the body before any early return: with keep-alive, unread
            # bytes would be parsed as the next request line
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length) if length else b"{}"
            if not self._authorized():
                self._json(401, {"error": "bad or missing bearer token"})
                return
            try:
                body = json.loads(raw.decode("utf-8")) if raw.strip() else {}
            except json.JSONDecodeError:
                self._json(400, {"error": "invalid JSON body"})
                return
            try:
                if parts[:2] == ["api", "actuate"]:
                    ack = cloud.actuate(body["edge"], body["actuator"], body.get("command", {}))
                    self._json(200, {"delivered": ack.delivered, "reason": ack.reason})
                elif (
                    len(parts) == 4 and parts[:2] == ["api", "alarms"] and parts[3] == "ack"
                ):
                    record = cloud.alarms.acknowledge(parts[2])
                    self._json(200, record.to_json())
                else:
                    self._json(404, {"error": "not found"})
            except UnknownAlarmError as e:
                self._json(404, {"error": f"unknown alarm {e}"})
            except KeyError as e:
                self._json(404, {"error": str(e)})

        def _stream(self) -> None:
            q = cloud.listen()
            try:
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(b": connected\n\n")
                self.wfile.flush()
                while True:
                    try:
                        event = q.get(timeout=15.0)
                    except queue_mod.Empty:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    chunk = (
                        f"event: {event['event']}\n"
                        f"data: {json.dumps(event['data'])}\n\n"
                    ).encode("utf-8")
                    self.wfile.write(chunk)
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError, OSError):
                pass
            finally:
                cloud.unlisten(q)

        def _static(self, parts) -> None:
            rel = "/".join(parts) if parts else "index.html"
            target = (static_dir / rel).resolve()
            if not str(target).startswith(str(static_dir.resolve())) or not target.is_file():
                if (static_dir / "index.html").is_file() and not parts:
                    target = static_dir / "index.html"
                else:
                    self._json(404, {"error": "not found"})
                    return
            content_types = {
                ".html": "text/html", ".js": "text/javascript", ".css": "text/css",
                ".svg": "image/svg+xml", ".json": "application/json",
            }
            data = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", content_types.get(target.suffix, "application/octet-stream"))
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

    return Handler


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cloud", description="Run the cloud node")
    parser.add_argument("--config", required=True, help="node JSON setup file")
    parser.add_argument("--http", default="127.0.0.1:8080", help="REST API bind host:port")
    parser.add_argument("--broker", default="127.0.0.1:5700",
                        help="broker bind host:port (the broker runs here)")
    parser.add_argument("--store", default=None, help="time-series persistence file")
    parser.add_argument("--static", default=None, help="static dashboard directory")
    parser.add_argument("--duration", type=float, default=None, help="stop after N seconds")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    config = load_config(args.config)

    broker = messaging.Broker()
    bhost, _, bport = args.broker.partition(":")
    broker_server = messaging.BrokerServer(broker, bhost, int(bport)).start()
    cloud = CloudNode(config, plane=broker, store_path=args.store).start()
    hhost, _, hport = args.http.partition(":")
    api = CloudApiServer(cloud, hhost, int(hport), static_dir=args.static).start()
    log.info("cloud %s: broker on %s, api on %s", config.label,
             broker_server.address, api.address)
    try:
        if args.duration is not None:
            time.sleep(args.duration)
        else:
            while True:
                time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        api.stop()
        cloud.stop()
        broker_server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
