"""Broker and wire protocol: topic pub/sub, point-to-point actuation, metering.

Routing keys are dot-joined segments; sensor streams travel on
edge.<EDGE_ID>.sensors.<SENSOR_ID>, actuation on
edge.<EDGE_ID>.actuators.<ACTUATOR_ID>. A frame on the wire is a 4-byte
big-endian body length followed by a canonical-JSON body
{key, ts, type, payload}; the byte count of that encoding is what the
bandwidth meter sees, identically for the in-process and the TCP transport.

The broker is a single hub (colocated with the cloud node in deployments).
Delivery is FIFO per publisher; actuation is at-most-once with an explicit
undeliverable ack.
"""

from __future__ import annotations

import base64
import json
import socket
import socketserver
import struct
import threading
import queue as queue_mod
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from . import aggregation as agg
from .clock import WallClock

WILDCARD = "*"


class RoutingKeyError(ValueError):
    """Malformed routing key or pattern."""


class MeterNotReadyError(RuntimeError):
    """No completed metering window yet."""


class BrokerUnreachableError(ConnectionError):
    """TCP broker endpoint could not be reached."""


# --- routing keys ---------------------------------------------------------


def join_key(segments: Iterable) -> str:
    parts = list(segments)
    for part in parts:
        if not isinstance(part, str) or not part:
            raise RoutingKeyError(f"bad key segment {part!r}")
        if "." in part:
            raise RoutingKeyError(f"key segment {part!r} contains '.'")
    return ".".join(parts)


def split_key(key: str) -> list:
    parts = key.split(".")
    if any(not p for p in parts):
        raise RoutingKeyError(f"empty segment in key {key!r}")
    return parts


def sensor_key(edge: str, sensor: str) -> str:
    return join_key(["edge", edge, "sensors", sensor])


def actuator_key(edge: str, actuator: str) -> str:
    return join_key(["edge", edge, "actuators", actuator])


def heartbeat_key(edge: str) -> str:
    return join_key(["edge", edge, "heartbeat"])


def alarm_key(edge: str) -> str:
    return join_key(["edge", edge, "alarms"])


def ack_key(edge: str, device: str) -> str:
    return join_key(["edge", edge, "acks", device])


def agent_task_key(node: str) -> str:
    return join_key(["agent", node, "tasks"])


def agent_result_key(node: str) -> str:
    return join_key(["agent", node, "results"])


def key_matches(pattern: str, key: str) -> bool:
    """Segment-wise match; '*' matches exactly one segment, counts must agree."""
    p = pattern.split(".")
    k = key.split(".")
    if len(p) != len(k):
        return False
    return all(ps == WILDCARD or ps == ks for ps, ks in zip(p, k))


# --- frames ---------------------------------------------------------------

_LENGTH = struct.Struct(">I")


@dataclass(frozen=True)
class Frame:
    key: str
    ts: int
    type: str
    payload: dict = field(default_factory=dict)


def encode_frame(frame: Frame) -> bytes:
    """4-byte big-endian length prefix + canonical JSON body."""
    body = json.dumps(
        {"key": frame.key, "payload": frame.payload, "ts": frame.ts, "type": frame.type},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    return _LENGTH.pack(len(body)) + body


def decode_frame(data: bytes) -> Frame:
    (length,) = _LENGTH.unpack_from(data)
    body = json.loads(data[4 : 4 + length].decode("utf-8"))
    return Frame(key=body["key"], ts=body["ts"], type=body["type"], payload=body["payload"])


def frame_bytes(frame: Frame) -> int:
    return len(encode_frame(frame))


# --- aggregate payload wire encoding --------------------------------------


def payload_to_wire(payload: agg.AggregatePayload) -> dict:
    if isinstance(payload, agg.SeriesPayload):
        return {"kind": "series", "points": [[ts, list(vs)] for ts, vs in payload.points]}
    if isinstance(payload, agg.ScalarPayload):
        return {"kind": payload.method, "values": list(payload.values)}
    if isinstance(payload, agg.PhasorPayload):
        return {
            "kind": "phasor",
            "channels": [[c.amplitude, c.phase, c.frequency] for c in payload.channels],
        }
    raise TypeError(f"not an aggregate payload: {payload!r}")


def payload_from_wire(doc: dict) -> agg.AggregatePayload:
    kind = doc["kind"]
    if kind == "series":
        return agg.SeriesPayload(tuple((ts, tuple(vs)) for ts, vs in doc["points"]))
    if kind in ("sum", "average", "last"):
        return agg.ScalarPayload(tuple(doc["values"]), kind)
    if kind == "phasor":
        return agg.PhasorPayload(
            tuple(agg.ChannelPhasor(a, p, f) for a, p, f in doc["channels"])
        )
    raise ValueError(f"unknown payload kind {kind!r}")


# --- generic value encoding (task envelopes) -------------------------------


def encode_value(value):
    """JSON-able encoding of task inputs/outputs; ndarrays go base64."""
    if isinstance(value, np.ndarray):
        return {
            "__nd__": {
                "dtype": value.dtype.str,
                "shape": list(value.shape),
                "data": base64.b64encode(np.ascontiguousarray(value).tobytes()).decode("ascii"),
            }
        }
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [encode_value(v) for v in value]
    if isinstance(value, dict):
        return {k: encode_value(v) for k, v in value.items()}
    return value


def decode_value(value):
    if isinstance(value, dict):
        if "__nd__" in value:
            spec = value["__nd__"]
            raw = base64.b64decode(spec["data"])
            return np.frombuffer(raw, dtype=np.dtype(spec["dtype"])).reshape(spec["shape"]).copy()
        return {k: decode_value(v) for k, v in value.items()}
    if isinstance(value, list):
        return [decode_value(v) for v in value]
    return value


# --- bandwidth meter --------------------------------------------------------


class BandwidthMeter:
    """Byte accounting over tumbling windows, keyed by frame timestamp.

    Counts include the 4-byte length prefix. Rates are only reported for
    completed windows.
    """

    def __init__(self, window_ns: int = 1_000_000_000, start_ns: int = 0):
        if window_ns <= 0:
            raise ValueError("meter window must be positive")
        self.window_ns = window_ns
        self.start_ns = start_ns
        self._records: list = []  # (ts, key, nbytes)
        self._lock = threading.Lock()

    def record(self, ts: int, key: str, nbytes: int) -> None:
        with self._lock:
            self._records.append((ts, key, nbytes))

    def total_bytes(self, t0: int, t1: int, pattern: Optional[str] = None) -> int:
        """Framed bytes with t0 <= ts < t1, optionally filtered by key pattern."""
        with self._lock:
            records = list(self._records)
        total = 0
        for ts, key, nbytes in records:
            if t0 <= ts < t1 and (pattern is None or key_matches(pattern, key)):
                total += nbytes
        return total

    def rate_over(self, t0: int, t1: int, pattern: Optional[str] = None) -> float:
        if t1 <= t0:
            raise ValueError("empty metering interval")
        return self.total_bytes(t0, t1, pattern) / ((t1 - t0) / 1e9)

    def rate(self, now: int, pattern: Optional[str] = None) -> float:
        """Bytes/s over the last completed tumbling window before `now`."""
        completed = (now - self.start_ns) // self.window_ns
        if completed < 1:
            raise MeterNotReadyError("no completed metering window yet")
        end = self.start_ns + completed * self.window_ns
        return self.rate_over(end - self.window_ns, end, pattern)


# --- acks -------------------------------------------------------------------


@dataclass(frozen=True)
class Ack:
    delivered: bool
    reason: Optional[str] = None


# --- subscriptions ----------------------------------------------------------


class Subscription:
    """Single-consumer stream of frames matching one pattern."""

    def __init__(self, pattern: str, on_close: Optional[Callable] = None):
        self.pattern = pattern
        self._queue: "queue_mod.Queue" = queue_mod.Queue()
        self._closed = False
        self._on_close = on_close

    def _deliver(self, frame: Frame) -> None:
        if not self._closed:
            self._queue.put(frame)

    def get(self, timeout: Optional[float] = None) -> Optional[Frame]:
        """Next frame, or None on timeout / closed-and-drained."""
        if self._closed and self._queue.empty():
            return None
        try:
            item = self._queue.get(timeout=timeout) if timeout is not None else self._queue.get_nowait()
        except queue_mod.Empty:
            return None
        return item

    def drain(self) -> list:
        frames = []
        while True:
            try:
                frames.append(self._queue.get_nowait())
            except queue_mod.Empty:
                return frames

    def __iter__(self):
        while not self._closed or not self._queue.empty():
            frame = self.get(timeout=0.1)
            if frame is not None:
                yield frame

    def close(self) -> None:
        self._closed = True
        if self._on_close is not None:
            self._on_close(self)
            self._on_close = None


class Broker:
    """In-process hub: pattern subscriptions, exclusive actuation consumers,
    byte-accurate metering. Safe for concurrent publishers and subscribers."""

    def __init__(self, clock=None, meter: Optional[BandwidthMeter] = None):
        self.clock = clock or WallClock()
        self.meter = meter or BandwidthMeter()
        self._subs: list = []
        self._consumers: list = []  # actuation endpoints, exclusive per match
        self._lock = threading.Lock()

    def subscribe(self, pattern: str) -> Subscription:
        for segment in pattern.split("."):
            if not segment:
                raise RoutingKeyError(f"bad pattern {pattern!r}")
        sub = Subscription(pattern, on_close=self._remove_sub)
        with self._lock:
            self._subs.append(sub)
        return sub

    def _remove_sub(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)
            if sub in self._consumers:
                self._consumers.remove(sub)

    def consume(self, pattern: str) -> Subscription:
        """Bind a point-to-point consumer (actuation endpoint)."""
        sub = Subscription(pattern, on_close=self._remove_sub)
        with self._lock:
            self._consumers.append(sub)
        return sub

    def publish(self, key: str, type: str, payload: dict, ts: Optional[int] = None) -> int:
        if WILDCARD in split_key(key):
            raise RoutingKeyError(f"cannot publish on wildcard key {key!r}")
        frame = Frame(key=key, ts=ts if ts is not None else self.clock.now_ns(), type=type, payload=payload)
        encoded = encode_frame(frame)
        # holding the lock through delivery preserves per-publisher FIFO
        with self._lock:
            self.meter.record(frame.ts, key, len(encoded))
            matched = [s for s in self._subs if key_matches(s.pattern, key)]
            for sub in matched:
                sub._deliver(frame)
        return len(matched)

    def send_actuation(self, edge: str, actuator: str, command: dict, ts: Optional[int] = None) -> Ack:
        key = actuator_key(edge, actuator)
        frame = Frame(key=key, ts=ts if ts is not None else self.clock.now_ns(), type="actuation", payload={"command": command})
        encoded = encode_frame(frame)
        with self._lock:
            self.meter.record(frame.ts, key, len(encoded))
            target = next((c for c in self._consumers if key_matches(c.pattern, key)), None)
            if target is None:
                return Ack(delivered=False, reason="no consumer bound")
            target._deliver(frame)
        return Ack(delivered=True)


# --- TCP transport ----------------------------------------------------------
#
# Wire protocol: every message is a Frame. A client opens
#   - one command connection: publishes flow as plain frames; actuation
#     requests use type "actuation-request" and receive an "ack" frame with
#     the same "corr" payload field; publishes receive a "pub-ack" with the
#     matched-subscriber count.
#   - one dedicated connection per subscription/consumer: it starts with a
#     "subscribe"/"consume" frame and then only receives matching frames,
#     byte-identical to what the in-process transport meters.


def _read_frame(sock_file) -> Optional[Frame]:
    header = sock_file.read(4)
    if len(header) < 4:
        return None
    (length,) = _LENGTH.unpack(header)
    body = sock_file.read(length)
    if len(body) < length:
        return None
    return decode_frame(header + body)


class _BrokerConnection(socketserver.BaseRequestHandler):
    def handle(self):
        broker: Broker = self.server.broker  # type: ignore[attr-defined]
        rfile = self.request.makefile("rb")
        wfile = self.request.makefile("wb")
        write_lock = threading.Lock()
        sub: Optional[Subscription] = None
        pump: Optional[threading.Thread] = None
        try:
            while True:
                frame = _read_frame(rfile)
                if frame is None:
                    return
                if frame.type in ("subscribe", "consume"):
                    pattern = frame.payload["pattern"]
                    sub = broker.subscribe(pattern) if frame.type == "subscribe" else broker.consume(pattern)
                    pump = threading.Thread(
                        target=self._pump, args=(sub, wfile, write_lock), daemon=True
                    )
                    pump.start()
                elif frame.type == "actuation-request":
                    p = frame.payload
                    ack = broker.send_actuation(p["edge"], p["actuator"], p["command"], ts=frame.ts)
                    reply = Frame(
                        key="broker.ack",
                        ts=broker.clock.now_ns(),
                        type="ack",
                        payload={"corr": p.get("corr"), "delivered": ack.delivered, "reason": ack.reason},
                    )
                    with write_lock:
                        wfile.write(encode_frame(reply))
                        wfile.flush()
                else:
                    # the correlation tag is transport plumbing: strip it so the
                    # metered/delivered frame is byte-identical to an in-process
                    # publish of the same payload
                    payload = dict(frame.payload)
                    corr = payload.pop("__corr__", None)
                    count = broker.publish(frame.key, frame.type, payload, ts=frame.ts)
                    if corr is not None:
                        reply = Frame(
                            key="broker.ack",
                            ts=broker.clock.now_ns(),
                            type="pub-ack",
                            payload={"corr": corr, "count": count},
                        )
                        with write_lock:
                            wfile.write(encode_frame(reply))
                            wfile.flush()
        except (ConnectionError, OSError, ValueError):
            pass
        finally:
            if sub is not None:
                sub.close()

    @staticmethod
    def _pump(sub: Subscription, wfile, write_lock) -> None:
        try:
            while True:
                frame = sub.get(timeout=0.2)
                if frame is None:
                    if sub._closed:
                        return
                    continue
                with write_lock:
                    wfile.write(encode_frame(frame))
                    wfile.flush()
        except (ConnectionError, OSError, ValueError):
            sub.close()


class BrokerServer:
    """TCP front end for a Broker."""

    def __init__(self, broker: Broker, host: str = "127.0.0.1", port: int = 0):
        self.broker = broker
        self._server = socketserver.ThreadingTCPServer((host, port), _BrokerConnection, bind_and_activate=True)
        self._server.daemon_threads = True
        self._server.broker = broker  # type: ignore[attr-defined]
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple:
        return self._server.server_address

    def start(self) -> "BrokerServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()


class BrokerClient:
    """TCP counterpart of the in-process Broker API."""

    def __init__(self, host: str, port: int, clock=None, connect_timeout: float = 2.0):
        self.host, self.port = host, port
        self.clock = clock or WallClock()
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as e:
            raise BrokerUnreachableError(f"broker at {host}:{port} unreachable: {e}") from e
        self._sock.settimeout(None)
        self._rfile = self._sock.makefile("rb")
        self._wfile = self._sock.makefile("wb")
        self._send_lock = threading.Lock()
        self._corr = 0
        self._pending: dict = {}
        self._pending_lock = threading.Lock()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._extra_socks: list = []

    def _read_loop(self) -> None:
        try:
            while True:
                frame = _read_frame(self._rfile)
                if frame is None:
                    return
                corr = frame.payload.get("corr")
                with self._pending_lock:
                    waiter = self._pending.pop(corr, None)
                if waiter is not None:
                    waiter["frame"] = frame
                    waiter["event"].set()
        except (ConnectionError, OSError, ValueError):
            pass

    def _request(self, frame: Frame, corr: int, timeout: float = 10.0) -> Frame:
        waiter = {"event": threading.Event(), "frame": None}
        with self._pending_lock:
            self._pending[corr] = waiter
        with self._send_lock:
            self._wfile.write(encode_frame(frame))
            self._wfile.flush()
        if not waiter["event"].wait(timeout):
            raise BrokerUnreachableError("broker did not answer in time")
        return waiter["frame"]

    def _next_corr(self) -> int:
        with self._send_lock:
            self._corr += 1
            return self._corr

    def publish(self, key: str, type: str, payload: dict, ts: Optional[int] = None) -> int:
        corr = self._next_corr()
        body = dict(payload)
        body["__corr__"] = corr
        frame = Frame(key=key, ts=ts if ts is not None else self.clock.now_ns(), type=type, payload=body)
        reply = self._request(frame, corr)
        return int(reply.payload["count"])

    def send_actuation(self, edge: str, actuator: str, command: dict, ts: Optional[int] = None) -> Ack:
        corr = self._next_corr()
        frame = Frame(
            key="broker.actuate",
            ts=ts if ts is not None else self.clock.now_ns(),
            type="actuation-request",
            payload={"edge": edge, "actuator": actuator, "command": command, "corr": corr},
        )
        reply = self._request(frame, corr)
        return Ack(delivered=bool(reply.payload["delivered"]), reason=reply.payload.get("reason"))

    def _stream(self, pattern: str, mode: str) -> Subscription:
        try:
            sock = socket.create_connection((self.host, self.port), timeout=2.0)
        except OSError as e:
            raise BrokerUnreachableError(f"broker at {self.host}:{self.port} unreachable: {e}") from e
        sock.settimeout(None)
        self._extra_socks.append(sock)
        wfile = sock.makefile("wb")
        rfile = sock.makefile("rb")
        wfile.write(
            encode_frame(Frame(key="broker.sub", ts=self.clock.now_ns(), type=mode, payload={"pattern": pattern}))
        )
        wfile.flush()
        sub = Subscription(pattern, on_close=lambda _s: sock.close())

        def reader():
            try:
                while True:
                    frame = _read_frame(rfile)
                    if frame is None:
                        return
                    sub._deliver(frame)
            except (ConnectionError, OSError, ValueError):
                pass

        threading.Thread(target=reader, daemon=True).start()
        return sub

    def subscribe(self, pattern: str) -> Subscription:
        return self._stream(pattern, "subscribe")

    def consume(self, pattern: str) -> Subscription:
        return self._stream(pattern, "consume")

    def close(self) -> None:
        for sock in [self._sock, *self._extra_socks]:
            try:
                sock.close()
            except OSError:
                pass


def connect(broker: Optional[str], clock=None):
    """Return a message plane: in-process Broker when `broker` is None,
    otherwise a BrokerClient for a "host:port" endpoint."""
    if broker is None:
        return Broker(clock=clock)
    host, _, port = broker.partition(":")
    return BrokerClient(host or "127.0.0.1", int(port), clock=clock)
