"""The edge runtime: drivers, windows, triggers, publishing, heartbeats, actuation.

An edge node loads its JSON config, samples each sensor driver at its
sampling interval, pushes readings into per-device rolling windows, runs the
trigger engine, publishes the window's aggregate every aggregation interval
on edge.<label>.sensors.<device>, consumes actuation commands from
edge.<label>.actuators.*, and emits heartbeats. It runs against a wall clock
or, for fast deterministic experiments, a virtual clock.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from . import messaging
from .aggregation import AggregateKind, EmptyWindowError, aggregate
from .clock import VirtualClock, WallClock
from .config import DeviceConfig, NodeConfig, load_config
from .functions import FunctionRegistry, ThreadDispatcher, TriggerEngine, default_registry
from .model import DeviceDescriptor, Measurement, MeasurementWindow
from .offload import AgentRuntime

log = logging.getLogger(__name__)

MS = 1_000_000  # ns per millisecond

DEFAULT_SAMPLING_MS = 100.0
DEFAULT_AGGREGATE_MS = 1000.0


class UnknownDriverError(ValueError):
    """Config names a driver with no registry entry."""


@dataclass(frozen=True)
class AckEvent:
    device: str
    command: dict
    accepted: bool
    detail: str = ""


# --- driver hierarchy -------------------------------------------------------
#
# Conceptual layer: Driver plus the Sensor/Actuator capabilities.
# Domain layer: SyntheticSineDriver (voltmeter-style source), SwitchDriver,
# MsgAlertDriver. Implementation layer: hardware drivers would subclass these;
# the Modbus entry below stays a stub on purpose (no field bus in this build).


class Driver:
    """Base class: binds a descriptor; subclasses add sensing/actuation."""

    kind = "device"

    def __init__(self, descriptor: DeviceDescriptor):
        self.descriptor = descriptor

    @property
    def label(self) -> str:
        return self.descriptor.label


class SensorMixin:
    def sample(self, t_ns: int) -> tuple:
        raise NotImplementedError


class ActuatorMixin:
    def apply(self, command: dict) -> AckEvent:
        raise NotImplementedError


class SyntheticSineDriver(Driver, SensorMixin):
    """Deterministic sinusoid-plus-harmonics-plus-noise source.

    value(t) = A*cos(2*pi*f*t + phi) + sum_i rel_i*A*cos(2*pi*mult_i*f*t)
             + N(0, noise_std), per channel; channel c is phase-shifted by
    c*channel_phase_step. Noise draws are seeded and consumed in sample order,
    so a fixed seed reproduces the exact stream.
    """

    kind = "voltmeter"

    def __init__(self, descriptor, amplitude=230.0, frequency=50.0, phase=0.0,
                 harmonics=(), noise_std=0.0, channel_phase_step=0.0, seed=0):
        super().__init__(descriptor)
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)
        self.phase = float(phase)
        self.harmonics = tuple((float(m), float(rel)) for m, rel in harmonics)
        self.noise_std = float(noise_std)
        self.channel_phase_step = float(channel_phase_step)
        self._rng = np.random.default_rng(seed)

    def sample(self, t_ns: int) -> tuple:
        t = t_ns / 1e9
        values = []
        for c in range(self.descriptor.channels):
            phi = self.phase + c * self.channel_phase_step
            v = self.amplitude * math.cos(2 * math.pi * self.frequency * t + phi)
            for mult, rel in self.harmonics:
                v += rel * self.amplitude * math.cos(2 * math.pi * mult * self.frequency * t)
            if self.noise_std > 0:
                v += self._rng.normal(0.0, self.noise_std)
            values.append(v)
        return tuple(values)


class SwitchDriver(Driver, SensorMixin, ActuatorMixin):
    """Two-state breaker: actuator for open/close, sensor reporting 0/1."""

    kind = "switch"

    def __init__(self, descriptor, initial="closed"):
        super().__init__(descriptor)
        self.state = initial

    def sample(self, t_ns: int) -> tuple:
        return (1.0 if self.state == "closed" else 0.0,) * self.descriptor.channels

    def apply(self, command: dict) -> AckEvent:
        action = command.get("action")
        if action in ("open", "close"):
            self.state = "open" if action == "open" else "closed"
            return AckEvent(self.label, command, True, f"switch {self.state}")
        return AckEvent(self.label, command, False, f"unknown command {action!r}")


class MsgAlertDriver(Driver, ActuatorMixin):
    """Result sink: records (and logs) every command it receives."""

    kind = "msg-alert"

    def __init__(self, descriptor, quiet=True):
        super().__init__(descriptor)
        self.quiet = quiet
        self.received: list = []

    def apply(self, command: dict) -> AckEvent:
        self.received.append(command)
        if not self.quiet:
            log.info("MsgAlert %s: %s", self.label, command)
        return AckEvent(self.label, command, True, "printed")


class ModbusVoltmeterStub(Driver, SensorMixin):
    """Placeholder for a field-bus voltmeter; no hardware I/O in this build."""

    kind = "voltmeter"

    def sample(self, t_ns: int) -> tuple:
        raise NotImplementedError("modbus hardware driver is a stub interface")


def _sine_factory(descriptor: DeviceConfig, node: NodeConfig):
    desc = _descriptor(descriptor, roles={"sensor"}, kind="voltmeter")
    props = descriptor.properties
    return SyntheticSineDriver(
        desc,
        amplitude=props.get("amplitude", 230.0),
        frequency=props.get("frequency", 50.0),
        phase=props.get("phase", 0.0),
        harmonics=props.get("harmonics", ()),
        noise_std=props.get("noise-std", 0.0),
        channel_phase_step=props.get("channel-phase-step", 0.0),
        seed=props.get("seed", 0),
    )


def _descriptor(device: DeviceConfig, roles, kind) -> DeviceDescriptor:
    return DeviceDescriptor(
        label=device.label,
        roles=roles,
        kind=kind,
        driver=device.driver,
        channels=device.channels,
        properties=dict(device.properties),
    )


DRIVER_REGISTRY: Dict[str, Callable] = {
    "synthetic-sine": _sine_factory,
    "switch": lambda d, n: SwitchDriver(_descriptor(d, {"sensor", "actuator"}, "switch"),
                                        initial=d.properties.get("initial", "closed")),
    "msg-alert": lambda d, n: MsgAlertDriver(_descriptor(d, {"actuator"}, "msg-alert")),
    "modbus-voltmeter": lambda d, n: ModbusVoltmeterStub(_descriptor(d, {"sensor"}, "voltmeter")),
}


def register_driver(name: str, factory: Callable) -> None:
    DRIVER_REGISTRY[name] = factory


# --- per-device runtime state -----------------------------------------------


@dataclass
class EdgeDevice:
    driver: Driver
    window: Optional[MeasurementWindow]
    aggregate_kind: AggregateKind
    sampling_ms: float
    aggregate_ms: float

    @property
    def label(self) -> str:
        return self.driver.label

    @property
    def is_sensor(self) -> bool:
        return isinstance(self.driver, SensorMixin) and self.driver.descriptor.is_sensor

    @property
    def is_actuator(self) -> bool:
        return isinstance(self.driver, ActuatorMixin) and self.driver.descriptor.is_actuator

    def latest(self) -> Optional[Measurement]:
        return self.window.latest() if self.window is not None else None

    def snapshot(self):
        return self.window.snapshot() if self.window is not None else []

    def act(self, command: dict) -> AckEvent:
        return self.driver.apply(command)


def window_capacity(device: DeviceConfig, node: NodeConfig, sampling_ms: float,
                    aggregate_ms: Optional[float]) -> int:
    """Explicit window-size wins; else the aggregation interval defines the
    window (n = round(Ta/Ts)); else the node default."""
    if device.window_size is not None:
        return device.window_size
    if aggregate_ms is not None:
        return max(1, round(aggregate_ms / sampling_ms))
    return node.default_window_size


@dataclass
class RunReport:
    label: str
    duration_s: float
    samples: int = 0
    publishes: int = 0
    dropped_publishes: int = 0
    dispatches: int = 0
    actuations: int = 0
    heartbeats: int = 0
    per_device_publishes: Dict[str, int] = field(default_factory=dict)


class EdgeNode:
    """One edge node: devices, windows, triggers, publisher, heartbeat, actuation."""

    def __init__(self, config: NodeConfig, plane=None, clock=None,
                 registry: Optional[FunctionRegistry] = None):
        if config.node_type != "edge":
            raise ValueError("EdgeNode needs an edge configuration")
        self.config = config
        self.label = config.label
        self.clock = clock or WallClock()
        self.plane = plane
        self.devices: Dict[str, EdgeDevice] = {}
        self._heartbeat_seq = 0
        self._consumer = None
        self.agent = AgentRuntime(config.label, config.slots, plane=plane, clock=self.clock)
        self.report = RunReport(label=config.label, duration_s=0.0)

        for dev_cfg in config.devices:
            factory = DRIVER_REGISTRY.get(dev_cfg.driver)
            if factory is None:
                raise UnknownDriverError(f"no driver registered for {dev_cfg.driver!r}")
            driver = factory(dev_cfg, config)
            sampling_ms = float(dev_cfg.properties.get("sampling-interval", DEFAULT_SAMPLING_MS))
            aggregate_ms = dev_cfg.properties.get("aggregate-interval")
            aggregate_ms = float(aggregate_ms) if aggregate_ms is not None else DEFAULT_AGGREGATE_MS
            window = None
            if driver.descriptor.is_sensor:
                window = MeasurementWindow(
                    capacity=window_capacity(dev_cfg, config, sampling_ms, aggregate_ms),
                    channels=driver.descriptor.channels,
                )
            self.devices[dev_cfg.label] = EdgeDevice(
                driver=driver,
                window=window,
                aggregate_kind=AggregateKind.parse(dev_cfg.aggregate),
                sampling_ms=sampling_ms,
                aggregate_ms=aggregate_ms,
            )

        self.triggers = TriggerEngine(
            sensor_views=self._sensor_views,
            actuator_views=self._actuator_views,
            registry=registry or default_registry(),
            async_dispatch=ThreadDispatcher(),
            alarm_sink=self._function_alarm,
            clock=self.clock,
        )
        for func in config.funcs:
            self.triggers.register(func)

    # --- device views handed to functions ---

    def _sensor_views(self, labels) -> dict:
        return {l: self.devices[l] for l in labels}

    def _actuator_views(self, labels) -> dict:
        return {l: self.devices[l] for l in labels}

    def _function_alarm(self, severity: str, source: str, message: str) -> None:
        if self.plane is None:
            log.warning("function %s failed: %s", source, message)
            return
        try:
            self.plane.publish(
                messaging.alarm_key(self.label),
                "alarm",
                {"severity": severity, "source": source, "message": message},
                ts=self.clock.now_ns(),
            )
        except Exception:
            log.exception("could not forward alarm")

    # --- ingestion and publication ---

    def ingest(self, label: str, m: Measurement) -> None:
        device = self.devices[label]
        if device.window is not None:
            device.window.push(m)
        self.report.samples += 1
        executions = self.triggers.on_measurement(label, m)
        self.report.dispatches += len(executions)

    def sample_device(self, label: str, now: int) -> Optional[Measurement]:
        device = self.devices[label]
        values = device.driver.sample(now)
        m = Measurement(timestamp=now, values=values, source=label)
        self.ingest(label, m)
        return m

    def publish_aggregate(self, label: str, now: int) -> bool:
        device = self.devices[label]
        if self.plane is None:
            self.report.dropped_publishes += 1
            return False
        try:
            payload = aggregate(device.window, device.aggregate_kind, device.sampling_ms / 1e3)
        except EmptyWindowError:
            return False
        try:
            self.plane.publish(
                messaging.sensor_key(self.label, label),
                "measurement",
                messaging.payload_to_wire(payload),
                ts=now,
            )
        except Exception:
            self.report.dropped_publishes += 1
            return False
        self.report.publishes += 1
        self.report.per_device_publishes[label] = self.report.per_device_publishes.get(label, 0) + 1
        return True

    def heartbeat(self, now: int) -> None:
        if self.plane is None:
            return
        self._heartbeat_seq += 1
        info = self.agent.info()
        payload = {
            "node": self.label,
            "seq": self._heartbeat_seq,
            "devices": [d.driver.descriptor.summary() for d in self.devices.values()],
            "slots": {"total": info.total_slots, "free": info.free_slots},
        }
        try:
            self.plane.publish(messaging.heartbeat_key(self.label), "heartbeat", payload, ts=now)
            self.report.heartbeats += 1
        except Exception as e:
            log.debug("heartbeat publish failed: %s", e)

    # --- actuation ---

    def apply_actuation(self, label: str, command: dict) -> AckEvent:
        device = self.devices.get(label)
        if device is None or not device.is_actuator:
            ack = AckEvent(label, command, False, "unknown actuator")
        else:
            ack = device.act(command)
            if ack.accepted:
                self.report.actuations += 1
        now = self.clock.now_ns()
        if self.plane is not None:
            self.plane.publish(
                messaging.ack_key(self.label, label),
                "actuation-ack",
                {"accepted": ack.accepted, "detail": ack.detail, "command": command},
                ts=now,
            )
            if ack.accepted and device is not None and device.is_sensor:
                # state changed: refresh the sensor stream immediately
                self.sample_device(label, now)
                self.publish_aggregate(label, now)
        return ack

    def _handle_actuation_frame(self, frame) -> None:
        label = frame.key.rsplit(".", 1)[1]
        self.apply_actuation(label, frame.payload.get("command", {}))

    # --- main loop ---

    def run(self, duration_s: float) -> RunReport:
        """Drive sampling/publishing/heartbeat until `duration_s` elapses.

        With a virtual clock the loop jumps event-to-event (faster than real
        time); with a wall clock it waits, waking early for actuation frames.
        """
        t0 = self.clock.now_ns()
        t_end = t0 + int(duration_s * 1e9)
        if self.plane is not None:
            self._consumer = self.plane.consume(f"edge.{self.label}.actuators.*")

        events: list = []  # (time, priority, kind, label)
        for label, device in self.devices.items():
            if device.is_sensor:
                events.append((t0, 0, "sample", label))
                events.append((t0 + int(device.aggregate_ms * MS), 1, "publish", label))
        hb_period = int(self.config.heartbeat_interval_ms * MS)
        events.append((t0, 2, "heartbeat", ""))
        next_trigger = self.triggers.next_fire_time()
        if next_trigger is not None:
            events.append((next_trigger, 3, "tick", ""))
        import heapq

        heapq.heapify(events)

        while events:
            when, priority, kind, label = events[0]
            if when > t_end:
                break
            # wait for the event; actuation wakes us early
            if not self.clock.virtual:
                while True:
                    now = self.clock.now_ns()
                    timeout = (when - now) / 1e9
                    if timeout <= 0:
                        break
                    if self._consumer is not None:
                        frame = self._consumer.get(timeout=min(timeout, 0.2))
                        if frame is not None:
                            self._handle_actuation_frame(frame)
                    else:
                        self.clock.sleep(min(timeout, 0.2))
            else:
                self.clock.advance_to(when)
                if self._consumer is not None:
                    for frame in self._consumer.drain():
                        self._handle_actuation_frame(frame)

            heapq.heappop(events)
            device = self.devices.get(label)
            if kind == "sample":
                self.sample_device(label, when)
                heapq.heappush(events, (when + int(device.sampling_ms * MS), 0, "sample", label))
            elif kind == "publish":
                self.publish_aggregate(label, when)
                heapq.heappush(events, (when + int(device.aggregate_ms * MS), 1, "publish", label))
            elif kind == "heartbeat":
                self.heartbeat(when)
                heapq.heappush(events, (when + hb_period, 2, "heartbeat", ""))
            elif kind == "tick":
                self.report.dispatches += len(self.triggers.tick(when))
                nxt = self.triggers.next_fire_time()
                if nxt is not None:
                    heapq.heappush(events, (nxt, 3, "tick", ""))

        if not self.clock.virtual:
            # drain any last actuation commands before stopping
            while True:
                now = self.clock.now_ns()
                if now >= t_end:
                    break
                frame = self._consumer.get(timeout=(t_end - now) / 1e9) if self._consumer else None
                if frame is not None:
                    self._handle_actuation_frame(frame)
                if self._consumer is None:
                    self.clock.sleep((t_end - now) / 1e9)
        else:
            self.clock.advance_to(t_end)
            if self._consumer is not None:
                for frame in self._consumer.drain():
                    self._handle_actuation_frame(frame)

        if self._consumer is not None:
            self._consumer.close()
            self._consumer = None
        self.report.duration_s = (self.clock.now_ns() - t0) / 1e9
        return self.report


def run_edge(config: NodeConfig, duration_s: float, plane=None, clock=None,
             registry: Optional[FunctionRegistry] = None,
             broker_addr: Optional[str] = None,
             retry_backoff_s: float = 0.5) -> RunReport:
    """Configure and run an edge node for a fixed duration.

    When `broker_addr` is given and unreachable, the node keeps sensing
    locally (publishes count as dropped) and retries the connection with
    exponential backoff at each heartbeat.
    """
    clock = clock or WallClock()
    if plane is None and broker_addr is not None:
        try:
            plane = messaging.connect(broker_addr, clock=clock)
        except messaging.BrokerUnreachableError:
            log.warning("broker %s unreachable; running in degraded local mode", broker_addr)
            plane = _ReconnectingPlane(broker_addr, clock, retry_backoff_s)
    node = EdgeNode(config, plane=plane, clock=clock, registry=registry)
    return node.run(duration_s)


class _ReconnectingPlane:
    """Degraded-mode stand-in: drops publishes, retries the broker with backoff."""

    def __init__(self, addr: str, clock, backoff_s: float):
        self.addr = addr
        self.clock = clock
        self.backoff_s = backoff_s
        self._next_try = 0.0
        self._inner = None

    def _try_connect(self):
        import time as _time

        if self._inner is not None:
            return self._inner
        now = _time.monotonic()
        if now < self._next_try:
            return None
        try:
            self._inner = messaging.connect(self.addr, clock=self.clock)
            log.info("broker %s reachable again", self.addr)
        except messaging.BrokerUnreachableError:
            self._next_try = now + self.backoff_s
            self.backoff_s = min(self.backoff_s * 2, 5.0)
        return self._inner

    def publish(self, *args, **kwargs):
        inner = self._try_connect()
        if inner is None:
            raise messaging.BrokerUnreachableError(self.addr)
        return inner.publish(*args, **kwargs)

    def send_actuation(self, *args, **kwargs):
        inner = self._try_connect()
        if inner is None:
            return messaging.Ack(delivered=False, reason="broker unreachable")
        return inner.send_actuation(*args, **kwargs)

    def subscribe(self, pattern: str):
        inner = self._try_connect()
        if inner is None:
            return messaging.Subscription(pattern)
        return inner.subscribe(pattern)

    def consume(self, pattern: str):
        inner = self._try_connect()
        if inner is None:
            return messaging.Subscription(pattern)
        return inner.consume(pattern)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="edge", description="Run an edge node")
    parser.add_argument("--config", required=True, help="node JSON setup file")
    parser.add_argument("--duration", type=float, default=None, help="run time in seconds")
    parser.add_argument("--virtual-clock", action="store_true", help="simulated time")
    parser.add_argument("--broker", default=None, help="broker host:port (default: in-process)")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    config = load_config(args.config)
    clock = VirtualClock(start_ns=1) if args.virtual_clock else WallClock()
    duration = args.duration if args.duration is not None else 3600.0
    report = run_edge(config, duration, clock=clock, broker_addr=args.broker)
    print(
        f"edge {report.label}: samples={report.samples} publishes={report.publishes} "
        f"dropped={report.dropped_publishes} dispatches={report.dispatches} "
        f"actuations={report.actuations} heartbeats={report.heartbeats}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
