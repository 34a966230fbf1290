"""Device taxonomy and measurement/rolling-window structures shared by every node.

A device is a sensor if it produces a measurement stream, an actuator if it
accepts commands, or both. The edge keeps one rolling window of recent
measurements per sensor; the cloud keeps an approximate mirror of each device
refreshed by heartbeats and aggregated measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Optional

if TYPE_CHECKING:
    from .aggregation import AggregatePayload


class Role(str, Enum):
    SENSOR = "sensor"
    ACTUATOR = "actuator"


class Availability(str, Enum):
    ONLINE = "online"
    OFFLINE = "offline"


class ChannelMismatchError(ValueError):
    """Measurement value count does not match the window's channel count."""


@dataclass(frozen=True)
class DeviceDescriptor:
    """Static description of one device as configured on its edge node.

    The label doubles as a routing-key segment, so it must not contain ".".
    Spaces are fine.
    """

    label: str
    roles: frozenset
    kind: str
    driver: str
    channels: int = 1
    properties: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.label:
            raise ValueError("device label must be non-empty")
        if "." in self.label:
            raise ValueError(f"device label {self.label!r} may not contain '.'")
        if not self.roles:
            raise ValueError(f"device {self.label!r} needs at least one role")
        if self.channels < 1:
            raise ValueError(f"device {self.label!r}: channels must be >= 1")
        object.__setattr__(self, "roles", frozenset(Role(r) for r in self.roles))

    @property
    def is_sensor(self) -> bool:
        return Role.SENSOR in self.roles

    @property
    def is_actuator(self) -> bool:
        return Role.ACTUATOR in self.roles

    def summary(self) -> dict:
        """Compact dict used in heartbeat payloads."""
        return {
            "label": self.label,
            "roles": sorted(r.value for r in self.roles),
            "kind": self.kind,
            "channels": self.channels,
        }


@dataclass(frozen=True)
class Measurement:
    """One timestamped reading: nanosecond timestamp plus one value per channel.

    Timestamps from a single sensor are expected to be strictly increasing;
    that is the producer's contract, not checked here.
    """

    timestamp: int
    values: tuple
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


class MeasurementWindow:
    """Fixed-capacity circular buffer of the most recent measurements.

    Constant-time push; once full, a push overwrites the oldest entry. The
    backing slot array never reallocates. One writer, many readers: snapshot
    copies out the current contents.
    """

    def __init__(self, capacity: int, channels: int = 1):
        if capacity < 1:
            raise ValueError("window capacity must be >= 1")
        if channels < 1:
            raise ValueError("window channels must be >= 1")
        self.capacity = capacity
        self.channels = channels
        self._ring: list = [None] * capacity
        self._head = 0  # next write index
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def push(self, m: Measurement) -> "MeasurementWindow":
        if len(m.values) != self.channels:
            raise ChannelMismatchError(
                f"expected {self.channels} channel(s), got {len(m.values)}"
            )
        self._ring[self._head] = m
        self._head = (self._head + 1) % self.capacity
        if self._count < self.capacity:
            self._count += 1
        return self

    def snapshot(self) -> list:
        """Entries in oldest-to-newest order; length equals the fill level."""
        if self._count < self.capacity:
            return self._ring[: self._count]
        return self._ring[self._head :] + self._ring[: self._head]

    def latest(self) -> Optional[Measurement]:
        if self._count == 0:
            return None
        return self._ring[(self._head - 1) % self.capacity]

    def values_array(self, channel: int = 0) -> list:
        """Values of one channel in window order."""
        return [m.values[channel] for m in self.snapshot()]


@dataclass
class VirtualDeviceState:
    """Cloud-side mirror of an edge device, refreshed by heartbeats and measurements."""

    descriptor: DeviceDescriptor
    owner: str
    availability: Availability = Availability.ONLINE
    last_heartbeat: int = 0
    last_payload: Optional["AggregatePayload"] = None
    last_update: int = 0


def mark_availability(
    state: VirtualDeviceState, now: int, miss_threshold_ns: int
) -> VirtualDeviceState:
    """Flip availability from the heartbeat age.

    Offline only when strictly past the threshold, so the boundary case
    (age == threshold) stays online.
    """
    if miss_threshold_ns <= 0:
        raise ValueError("miss threshold must be > 0")
    if now - state.last_heartbeat > miss_threshold_ns:
        state.availability = Availability.OFFLINE
    else:
        state.availability = Availability.ONLINE
    return state
