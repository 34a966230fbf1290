"""Registration and trigger dispatch of user functions.

Every function takes exactly three arguments: a map of the sensors it may
read, a map of the actuators it may drive, and its parameter map. Triggers
come in four kinds: onFrequency (fixed-rate periodic), onRead (every k-th
measurement of a watched sensor), onChange (watched value moved beyond an
epsilon) and onStart (exactly once at registration).

Synchronous functions run on the ingestion path; asynchronous ones are handed
to an executor callback and never block ingestion. A callable failure becomes
an alarm event, never an exception on the ingestion path.
"""

from __future__ import annotations

import threading
import traceback
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

from .config import FuncConfig
from .model import Measurement

MS = 1_000_000  # ns per millisecond


class RegistrationError(ValueError):
    """Unknown method name, duplicate label, or dangling device reference."""


class FunctionRegistry:
    """Maps config method-name strings to host callables."""

    def __init__(self):
        self._methods: Dict[str, Callable] = {}

    def register(self, name: str, fn: Callable) -> None:
        self._methods[name] = fn

    def resolve(self, name: str) -> Callable:
        try:
            return self._methods[name]
        except KeyError:
            raise RegistrationError(f"unknown method-name {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._methods


def builtin_volt_limitation(sensors, actuators, params):
    """Open the bound switch when the latest reading exceeds the threshold.

    Comparison is strict: a reading exactly at the threshold does nothing.
    Returns the issued command, or None.
    """
    if "threshold" not in params:
        raise RegistrationError("volt_limitation needs a 'threshold' parameter")
    threshold = float(params["threshold"])
    sensor = next(iter(sensors.values()))
    switch = next(iter(actuators.values()))
    latest = sensor.latest()
    if latest is not None and any(v > threshold for v in latest.values):
        command = {"action": "open"}
        switch.act(command)
        return command
    return None


def default_registry() -> FunctionRegistry:
    registry = FunctionRegistry()
    registry.register("builtin.volt_limitation", builtin_volt_limitation)
    return registry


@dataclass
class TriggerEvent:
    kind: str
    source: Optional[str]
    fire_time: int


@dataclass
class Execution:
    """One dispatched invocation, synchronous or queued."""

    function: str
    event: TriggerEvent
    synchronous: bool
    result: object = None
    error: Optional[str] = None


@dataclass
class FunctionBinding:
    spec: FuncConfig
    callable: Callable
    counters: Dict[str, int] = field(default_factory=dict)  # per trigger sensor
    last_values: Dict[str, tuple] = field(default_factory=dict)
    next_fire: Optional[int] = None
    started: bool = False


class TriggerEngine:
    """Owns the bindings of one node and dispatches them.

    `device_views` resolves labels to sensor/actuator view objects (the edge
    runtime provides these; tests can stub them). `async_dispatch(fn)` hands a
    zero-argument callable to the asynchronous executor and must not block.
    `alarm_sink(severity, source, message)` receives callable failures.
    Registration is not concurrent with dispatch.
    """

    def __init__(
        self,
        sensor_views: Callable[[tuple], dict],
        actuator_views: Callable[[tuple], dict],
        registry: Optional[FunctionRegistry] = None,
        async_dispatch: Optional[Callable] = None,
        alarm_sink: Optional[Callable] = None,
        clock=None,
    ):
        self.registry = registry or default_registry()
        self._sensor_views = sensor_views
        self._actuator_views = actuator_views
        self._async_dispatch = async_dispatch
        self._alarm_sink = alarm_sink
        self._clock = clock
        self.bindings: Dict[str, FunctionBinding] = {}
        self.dispatch_count = 0

    def _now(self) -> int:
        return self._clock.now_ns() if self._clock is not None else 0

    def register(self, spec: FuncConfig, now: Optional[int] = None) -> FunctionBinding:
        if spec.label in self.bindings:
            raise RegistrationError(f"duplicate function label {spec.label!r}")
        if spec.lang.lower() != "python":
            # foreign lang tags parse fine (portable configs) but cannot run here
            raise RegistrationError(
                f"function {spec.label!r}: lang {spec.lang!r} is not executable on this node"
            )
        fn = self.registry.resolve(spec.method_name)
        for label in (*spec.sensors, *spec.trigger.sensors):
            self._sensor_views((label,))  # raises KeyError on dangling reference
        for label in spec.actuators:
            self._actuator_views((label,))
        binding = FunctionBinding(spec=spec, callable=fn)
        now = now if now is not None else self._now()
        if spec.trigger.kind == "onFrequency":
            binding.next_fire = now + int(spec.trigger.interval * MS)
        self.bindings[spec.label] = binding
        if spec.trigger.kind == "onStart" and not binding.started:
            binding.started = True
            self._dispatch(binding, TriggerEvent("onStart", None, now))
        return binding

    def on_measurement(self, sensor: str, m: Measurement) -> list:
        """Run onRead/onChange bookkeeping for one ingested measurement."""
        dispatched = []
        for binding in self.bindings.values():
            trigger = binding.spec.trigger
            if sensor not in trigger.sensors:
                continue
            if trigger.kind == "onRead":
                count = binding.counters.get(sensor, 0) + 1
                binding.counters[sensor] = count
                interval = int(trigger.interval or 1)
                if count % interval == 0:
                    dispatched.append(
                        self._dispatch(binding, TriggerEvent("onRead", sensor, m.timestamp))
                    )
            elif trigger.kind == "onChange":
                previous = binding.last_values.get(sensor)
                changed = previous is None or any(
                    abs(new - old) > trigger.epsilon for new, old in zip(m.values, previous)
                )
                binding.last_values[sensor] = m.values
                if changed:
                    dispatched.append(
                        self._dispatch(binding, TriggerEvent("onChange", sensor, m.timestamp))
                    )
        return dispatched

    def tick(self, now: int) -> list:
        """Fire due onFrequency bindings; fixed-rate, catches up after delays."""
        dispatched = []
        for binding in self.bindings.values():
            trigger = binding.spec.trigger
            if trigger.kind != "onFrequency" or binding.next_fire is None:
                continue
            period = int(trigger.interval * MS)
            while binding.next_fire <= now:
                fire_at = binding.next_fire
                binding.next_fire += period
                dispatched.append(
                    self._dispatch(binding, TriggerEvent("onFrequency", None, fire_at))
                )
        return dispatched

    def next_fire_time(self) -> Optional[int]:
        times = [b.next_fire for b in self.bindings.values() if b.next_fire is not None]
        return min(times) if times else None

    def _dispatch(self, binding: FunctionBinding, event: TriggerEvent) -> Execution:
        spec = binding.spec
        execution = Execution(
            function=spec.label, event=event, synchronous=spec.exec_type == "synchronous"
        )
        sensors = self._sensor_views(spec.sensors)
        actuators = self._actuator_views(spec.actuators)

        def invoke():
            try:
                execution.result = binding.callable(sensors, actuators, dict(spec.other))
            except Exception as e:  # callable failures become alarms, not crashes
                execution.error = f"{type(e).__name__}: {e}"
                if self._alarm_sink is not None:
                    self._alarm_sink("warning", spec.label, execution.error)
                else:
                    traceback.print_exc()

        self.dispatch_count += 1
        if execution.synchronous or self._async_dispatch is None:
            invoke()
        else:
            self._async_dispatch(invoke)
        return execution


class ThreadDispatcher:
    """Minimal async executor: one daemon thread per dispatch, bounded by a
    semaphore. Good enough for function bodies that mostly wait on task graphs."""

    def __init__(self, max_workers: int = 8):
        self._gate = threading.Semaphore(max_workers)

    def __call__(self, fn: Callable) -> None:
        def run():
            try:
                fn()
            finally:
                self._gate.release()

        self._gate.acquire()
        threading.Thread(target=run, daemon=True).start()
