"""Wall and virtual clocks shared by the node runtimes.

All timestamps are integer nanoseconds since the epoch. The virtual clock
lets schedule-heavy experiments (bandwidth grids, trigger counting) run
faster than real time while keeping every timestamp deterministic.
"""

from __future__ import annotations

import time


class WallClock:
    """Real time. `now_ns` is `time.time_ns`."""

    virtual = False

    def now_ns(self) -> int:
        return time.time_ns()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock:
    """Manually advanced clock for deterministic simulated-time runs.

    Single-threaded contract: one driver advances time; readers may call
    `now_ns` from other threads but must not assume it moves on its own.
    """

    virtual = True

    def __init__(self, start_ns: int = 0):
        self._now = int(start_ns)

    def now_ns(self) -> int:
        return self._now

    def advance_to(self, t_ns: int) -> None:
        if t_ns < self._now:
            raise ValueError(f"virtual clock cannot move backwards ({t_ns} < {self._now})")
        self._now = int(t_ns)

    def advance(self, delta_ns: int) -> None:
        self.advance_to(self._now + int(delta_ns))

    def sleep(self, seconds: float) -> None:
        self.advance(int(seconds * 1e9))
