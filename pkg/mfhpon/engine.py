"""
Discrete-event engine for the upstream simulator.

A single global clock in integer picoseconds, one priority queue of
timestamped events and a run loop that dispatches them to registered
handlers. Events are totally ordered by (time, seq) where seq is issued
at insertion, so replaying the same insertions gives the same dispatch
sequence.
"""

from __future__ import annotations

import heapq
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, TextIO

logger = logging.getLogger(__name__)

# Integer picoseconds.
SimTime = int

PS_PER_SECOND = 10**12
PS_PER_US = 10**6
PS_PER_NS = 10**3
BITS_PER_BYTE = 8


def seconds_to_ps(seconds: float) -> SimTime:
    """Convert seconds to picoseconds, rounding to the nearest tick."""
    return round(seconds * PS_PER_SECOND)


def us_to_ps(microseconds: float) -> SimTime:
    """Convert microseconds to picoseconds, rounding to the nearest tick."""
    return round(microseconds * PS_PER_US)


def byte_time_ps(line_rate_bps: int) -> SimTime:
    """Time one byte occupies on a link of the given rate.

    Raises:
        ValueError: If the rate does not give an integer number of picoseconds.
    """
    if line_rate_bps <= 0:
        raise ValueError(f"Line rate must be positive, got {line_rate_bps}")
    ps, rem = divmod(BITS_PER_BYTE * PS_PER_SECOND, line_rate_bps)
    if rem:
        raise ValueError(f"Line rate {line_rate_bps} bit/s has no integer byte time in picoseconds")
    return ps


class SimulationError(Exception):
    """Base class for every error raised while simulating."""


class SchedulingInPast(SimulationError):
    """An event was scheduled before the current clock."""


class EventKind(Enum):
    """Payload kinds the run loop knows how to dispatch."""

    FRAME_ARRIVAL = "frame_arrival"
    REPORT_ARRIVAL_AT_OLT = "report_arrival_at_olt"
    GATE_ARRIVAL_AT_ONU = "gate_arrival_at_onu"
    TRANSMISSION_START = "transmission_start"
    TRANSMISSION_END = "transmission_end"
    BURST_EMISSION = "burst_emission"
    SIM_END = "sim_end"


@dataclass(frozen=True)
class Event:
    """A timestamped entry of the event queue."""

    time: SimTime
    seq: int
    kind: EventKind
    entity: int = -1
    payload: Any = field(default=None, compare=False)


Handler = Callable[[Event], None]


class Engine:
    """Global clock plus a (time, seq)-ordered event queue.

    Single-threaded: one engine belongs to one replication.
    """

    def __init__(self, trace: TextIO | None = None) -> None:
        self.clock: SimTime = 0
        self._queue: list[tuple[SimTime, int, Event]] = []
        self._next_seq = 0
        self._handlers: dict[EventKind, Handler] = {}
        self._trace = trace
        self.dispatched = 0

    def register(self, kind: EventKind, handler: Handler) -> None:
        """Register the handler for an event kind, replacing any earlier one."""
        self._handlers[kind] = handler

    def schedule_event(self, t: SimTime, kind: EventKind, entity: int = -1, payload: Any = None) -> int:
        """Insert an event and return its id (the insertion sequence number).

        Raises:
            SchedulingInPast: If t lies before the current clock.
        """
        if t < self.clock:
            raise SchedulingInPast(f"{kind.name} scheduled at {t} ps but clock is already {self.clock} ps")
        seq = self._next_seq
        self._next_seq += 1
        heapq.heappush(self._queue, (t, seq, Event(t, seq, kind, entity, payload)))
        return seq

    def pending(self) -> int:
        """Number of events still queued."""
        return len(self._queue)

    def peek_time(self) -> SimTime | None:
        """Time of the next event, or None when the queue is empty."""
        return self._queue[0][0] if self._queue else None

    def run_until(self, t_end: SimTime) -> int:
        """Dispatch every event with time <= t_end in (time, seq) order.

        Leaves the clock at t_end and returns the number of events dispatched.
        """
        if t_end < self.clock:
            raise SchedulingInPast(f"run_until({t_end}) is before the clock ({self.clock})")
        count = 0
        queue = self._queue
        handlers = self._handlers
        while queue and queue[0][0] <= t_end:
            t, _, event = heapq.heappop(queue)
            self.clock = t
            if self._trace is not None:
                self._trace.write(f"{t} {event.seq} {event.kind.name} {event.entity}\n")
            handler = handlers.get(event.kind)
            if handler is None:
                raise SimulationError(f"No handler registered for {event.kind.name}")
            handler(event)
            count += 1
        self.clock = t_end
        self.dispatched += count
        logger.debug("Dispatched %d events up to %d ps", count, t_end)
        return count
