"""Parsing and validation of per-node JSON setup files.

A node file has a "global-properties" block (type, label, window-size, comms,
heartbeat-interval), a "devices" list (edge only) and a "funcs" list. Cloud
files add an optional "alarms" rule list and carry no devices. Unknown keys
are preserved and reported as warnings, never errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .aggregation import AggregateKind

TRIGGER_KINDS = ("onFrequency", "onRead", "onChange", "onStart")
EXEC_TYPES = ("synchronous", "asynchronous")
NODE_TYPES = ("edge", "cloud")

DEFAULT_WINDOW_SIZE = 10
DEFAULT_HEARTBEAT_MS = 1000.0
DEFAULT_SLOTS = 1


class ConfigError(ValueError):
    """Malformed or structurally invalid node configuration."""


@dataclass(frozen=True)
class DeviceConfig:
    label: str
    driver: str
    comm_type: Optional[str] = None
    indexes: Optional[tuple] = None
    window_size: Optional[int] = None
    aggregate: str = "all"
    properties: dict = field(default_factory=dict)

    @property
    def channels(self) -> int:
        if self.indexes is not None:
            return len(self.indexes)
        return int(self.properties.get("channels", 1))


@dataclass(frozen=True)
class TriggerConfig:
    kind: str
    sensors: tuple = ()
    interval: Optional[float] = None  # count for onRead, milliseconds for onFrequency
    epsilon: float = 0.0
    parameters: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FuncConfig:
    label: str
    lang: str
    exec_type: str
    method_name: str
    sensors: tuple = ()
    actuators: tuple = ()
    other: dict = field(default_factory=dict)
    trigger: TriggerConfig = TriggerConfig(kind="onStart")


@dataclass(frozen=True)
class AlarmRuleConfig:
    series: str
    severity: str = "warning"
    above: Optional[float] = None
    below: Optional[float] = None
    message: str = ""


@dataclass(frozen=True)
class NodeConfig:
    node_type: str
    label: str
    default_window_size: int = DEFAULT_WINDOW_SIZE
    heartbeat_interval_ms: float = DEFAULT_HEARTBEAT_MS
    slots: int = DEFAULT_SLOTS
    comms: dict = field(default_factory=dict)
    devices: tuple = ()
    funcs: tuple = ()
    alarms: tuple = ()
    api_token: Optional[str] = None
    extras: dict = field(default_factory=dict)
    warnings: tuple = ()

    def device(self, label: str) -> DeviceConfig:
        for d in self.devices:
            if d.label == label:
                return d
        raise KeyError(label)


@dataclass(frozen=True)
class Violation:
    where: str
    message: str

    def __str__(self):
        return f"{self.where}: {self.message}"


_GLOBAL_KEYS = {
    "type", "label", "window-size", "comms", "heartbeat-interval", "slots", "api-token",
}
_DEVICE_PROP_KEYS = {"comm-type", "indexes", "window-size", "aggregate"}
_FUNC_KEYS = {"label", "lang", "type", "method-name", "parameters", "trigger"}
_TOP_KEYS = {"global-properties", "devices", "funcs", "alarms"}


def parse_config(text: str) -> NodeConfig:
    """Parse a node setup document into a fully defaulted NodeConfig.

    Raises ConfigError for malformed JSON, missing type/label or bad enum
    values; anything merely unknown lands in `extras` plus a warning.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a JSON object")

    warnings: list = []
    extras: dict = {}
    gp = doc.get("global-properties", {})
    if not isinstance(gp, dict):
        raise ConfigError('"global-properties" must be an object')

    node_type = gp.get("type")
    if node_type not in NODE_TYPES:
        raise ConfigError(f'global-properties.type must be one of {NODE_TYPES}, got {node_type!r}')
    label = gp.get("label")
    if not label or not isinstance(label, str):
        raise ConfigError("global-properties.label is required")

    for key in gp:
        if key not in _GLOBAL_KEYS:
            extras.setdefault("global-properties", {})[key] = gp[key]
            warnings.append(f"unknown global-properties key {key!r} preserved")
    for key in doc:
        if key not in _TOP_KEYS:
            extras[key] = doc[key]
            warnings.append(f"unknown top-level key {key!r} preserved")

    devices = []
    for i, dev in enumerate(doc.get("devices", []) or []):
        devices.append(_parse_device(dev, i, warnings))
    funcs = []
    for i, fn in enumerate(doc.get("funcs", []) or []):
        funcs.append(_parse_func(fn, i, warnings))
    alarms = tuple(_parse_alarm(rule) for rule in doc.get("alarms", []) or [])

    return NodeConfig(
        node_type=node_type,
        label=label,
        default_window_size=int(gp.get("window-size", DEFAULT_WINDOW_SIZE)),
        heartbeat_interval_ms=float(gp.get("heartbeat-interval", DEFAULT_HEARTBEAT_MS)),
        slots=int(gp.get("slots", DEFAULT_SLOTS)),
        comms=dict(gp.get("comms", {})),
        devices=tuple(devices),
        funcs=tuple(funcs),
        alarms=alarms,
        api_token=gp.get("api-token"),
        extras=extras,
        warnings=tuple(warnings),
    )


def _parse_device(dev: dict, index: int, warnings: list) -> DeviceConfig:
    if "label" not in dev:
        raise ConfigError(f"devices[{index}]: label is required")
    props = dict(dev.get("properties", {}))
    aggregate = props.get("aggregate", "all")
    try:
        AggregateKind.parse(aggregate)
    except ValueError as e:
        raise ConfigError(f"devices[{index}]: {e}") from None
    indexes = props.get("indexes")
    window = props.get("window-size")
    extra_props = {k: v for k, v in props.items() if k not in _DEVICE_PROP_KEYS}
    return DeviceConfig(
        label=dev["label"],
        driver=dev.get("driver", ""),
        comm_type=props.get("comm-type"),
        indexes=tuple(indexes) if indexes is not None else None,
        window_size=int(window) if window is not None else None,
        aggregate=aggregate,
        properties=extra_props,
    )


def _parse_func(fn: dict, index: int, warnings: list) -> FuncConfig:
    for key in ("label", "method-name"):
        if key not in fn:
            raise ConfigError(f"funcs[{index}]: {key} is required")
    exec_type = fn.get("type", "synchronous")
    if exec_type not in EXEC_TYPES:
        raise ConfigError(f"funcs[{index}]: type must be one of {EXEC_TYPES}, got {exec_type!r}")
    for key in fn:
        if key not in _FUNC_KEYS:
            warnings.append(f"funcs[{index}]: unknown key {key!r} preserved")

    params = fn.get("parameters", {})
    trig = fn.get("trigger", {"type": "onStart"})
    kind = trig.get("type", "onStart")
    if kind not in TRIGGER_KINDS:
        raise ConfigError(f"funcs[{index}]: trigger type must be one of {TRIGGER_KINDS}, got {kind!r}")
    tp = dict(trig.get("parameters", {}))
    interval = tp.pop("interval", None)
    trigger = TriggerConfig(
        kind=kind,
        sensors=tuple(tp.pop("trigger-sensor", []) or []),
        interval=float(interval) if interval is not None else None,
        epsilon=float(tp.pop("epsilon", 0.0)),
        parameters=tp,
    )
    return FuncConfig(
        label=fn["label"],
        lang=fn.get("lang", "Python"),
        exec_type=exec_type,
        method_name=fn["method-name"],
        sensors=tuple(params.get("sensors", [])),
        actuators=tuple(params.get("actuators", [])),
        other=dict(params.get("other", {})),
        trigger=trigger,
    )


def _parse_alarm(rule: dict) -> AlarmRuleConfig:
    if "series" not in rule:
        raise ConfigError("alarm rule needs a series key")
    return AlarmRuleConfig(
        series=rule["series"],
        severity=rule.get("severity", "warning"),
        above=rule.get("above"),
        below=rule.get("below"),
        message=rule.get("message", ""),
    )


def serialize(config: NodeConfig) -> str:
    """Render a NodeConfig back to its JSON document shape.

    parse(serialize(parse(text))) is a fixed point; key order is canonical.
    """
    gp: dict = {
        "type": config.node_type,
        "label": config.label,
        "window-size": config.default_window_size,
        "heartbeat-interval": config.heartbeat_interval_ms,
        "slots": config.slots,
        "comms": config.comms,
    }
    if config.api_token is not None:
        gp["api-token"] = config.api_token
    gp.update(config.extras.get("global-properties", {}))

    devices = []
    for d in config.devices:
        props = {"aggregate": d.aggregate}
        if d.comm_type is not None:
            props["comm-type"] = d.comm_type
        if d.indexes is not None:
            props["indexes"] = list(d.indexes)
        if d.window_size is not None:
            props["window-size"] = d.window_size
        props.update(d.properties)
        devices.append({"label": d.label, "driver": d.driver, "properties": props})

    funcs = []
    for f in config.funcs:
        tp = {"trigger-sensor": list(f.trigger.sensors)}
        if f.trigger.interval is not None:
            tp["interval"] = f.trigger.interval
        if f.trigger.epsilon:
            tp["epsilon"] = f.trigger.epsilon
        tp.update(f.trigger.parameters)
        funcs.append(
            {
                "label": f.label,
                "lang": f.lang,
                "type": f.exec_type,
                "method-name": f.method_name,
                "parameters": {
                    "sensors": list(f.sensors),
                    "actuators": list(f.actuators),
                    "other": f.other,
                },
                "trigger": {"type": f.trigger.kind, "parameters": tp},
            }
        )

    doc: dict = {"global-properties": gp}
    if devices:
        doc["devices"] = devices
    if funcs:
        doc["funcs"] = funcs
    if config.alarms:
        doc["alarms"] = [
            {
                k: v
                for k, v in {
                    "series": a.series,
                    "severity": a.severity,
                    "above": a.above,
                    "below": a.below,
                    "message": a.message,
                }.items()
                if v is not None
            }
            for a in config.alarms
        ]
    doc.update({k: v for k, v in config.extras.items() if k != "global-properties"})
    return json.dumps(doc, indent=2, sort_keys=True)


def validate(config: NodeConfig) -> list:
    """Structural checks beyond parsing; violations are data, not exceptions."""
    violations: list = []

    def bad(where, message):
        violations.append(Violation(where, message))

    if "." in config.label:
        bad("node", f"label {config.label!r} may not contain '.'")
    if config.default_window_size < 1:
        bad("node", "window-size must be >= 1")
    if config.heartbeat_interval_ms <= 0:
        bad("node", "heartbeat-interval must be positive")
    if config.node_type == "cloud" and config.devices:
        bad("node", "cloud configurations carry no devices list")

    seen = set()
    for d in config.devices:
        where = f"device {d.label!r}"
        if d.label in seen:
            bad(where, "duplicate label")
        seen.add(d.label)
        if not d.label:
            bad(where, "empty label")
        elif "." in d.label:
            bad(where, "label may not contain '.'")
        if d.window_size is not None and d.window_size < 1:
            bad(where, "window-size must be >= 1")
        try:
            AggregateKind.parse(d.aggregate)
        except ValueError:
            bad(where, f"unknown aggregate kind {d.aggregate!r}")

    device_labels = {d.label for d in config.devices}
    func_seen = set()
    for f in config.funcs:
        where = f"func {f.label!r}"
        if f.label in func_seen:
            bad(where, "duplicate label")
        func_seen.add(f.label)
        for s in f.sensors:
            if s not in device_labels:
                bad(where, f"references unknown sensor {s!r}")
        for a in f.actuators:
            if a not in device_labels:
                bad(where, f"references unknown actuator {a!r}")
        t = f.trigger
        if t.kind in ("onRead", "onChange"):
            if not t.sensors:
                bad(where, f"{t.kind} requires a non-empty trigger-sensor list")
            for s in t.sensors:
                if s not in device_labels:
                    bad(where, f"trigger references unknown sensor {s!r}")
            if t.kind == "onRead" and t.interval is not None and t.interval < 1:
                bad(where, "onRead interval must be >= 1")
        if t.kind == "onFrequency" and (t.interval is None or t.interval <= 0):
            bad(where, "onFrequency requires a positive interval")

    return violations


def load_config(path: str) -> NodeConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
