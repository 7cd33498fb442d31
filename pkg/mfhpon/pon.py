"""
Physical and protocol entities of the TWDM-EPON upstream.

OLT-side wavelength channels, ONUs with FIFO queues, the MPCP-style
Report/Gate messages and the two ONU-side operations of the polling
cycle: generating a piggybacked report and executing a grant.

Channel timelines are kept in the OLT receive frame: a burst from an ONU
whose one-way delay is tau occupies [s + tau, s + tau + duration) at the
OLT when the ONU starts sending at s.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from mfhpon.engine import SimTime, SimulationError, byte_time_ps

logger = logging.getLogger(__name__)

REPORT_BYTES = 64
MIN_FRAME_BYTES = 64
MAX_FRAME_BYTES = 1518
PROPAGATION_PS_PER_M = 5_000  # 5 us/km

_EMPTY = np.empty(0, dtype=np.int64)
_INITIAL_CAPACITY = 256


class OverlapDetected(SimulationError):
    """A burst left its reserved window or collided with another burst."""


class OnuKind(Enum):
    MFH = "mfh"
    CONVENTIONAL = "conventional"


def propagation_ps(distance_m: float) -> SimTime:
    """One-way fiber delay for the given distance."""
    return round(distance_m * PROPAGATION_PS_PER_M)


@dataclass
class WavelengthChannel:
    """One upstream wavelength as seen by the OLT receiver."""

    id: int
    line_rate_bps: int
    guard_ps: SimTime
    horizon: SimTime = 0
    busy_ps: SimTime = 0
    clip_end: SimTime | None = None
    record_bursts: bool = False
    bursts: list[tuple[SimTime, SimTime, int]] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        self.byte_ps = byte_time_ps(self.line_rate_bps)

    def transmission_time(self, n_bytes: int) -> SimTime:
        return n_bytes * self.byte_ps

    def reserve(self, olt_start: SimTime, n_bytes: int) -> SimTime:
        """Book [olt_start, end) and move the horizon past end + guard. Returns end."""
        if olt_start < self.horizon:
            raise OverlapDetected(f"Channel {self.id}: start {olt_start} ps is before horizon {self.horizon} ps")
        end = olt_start + self.transmission_time(n_bytes)
        self.horizon = end + self.guard_ps
        return end


@dataclass(frozen=True, slots=True)
class Frame:
    """An Ethernet frame waiting in (or drained from) an ONU queue."""

    size_bytes: int
    arrival_time: SimTime
    owner_onu: int

    def __post_init__(self) -> None:
        if not MIN_FRAME_BYTES <= self.size_bytes <= MAX_FRAME_BYTES:
            raise ValueError(f"Frame size {self.size_bytes} B outside [{MIN_FRAME_BYTES}, {MAX_FRAME_BYTES}]")


@dataclass(frozen=True, slots=True)
class ReportMsg:
    onu_id: int
    queue_bytes: int
    gen_time: SimTime


@dataclass(frozen=True, slots=True)
class GateMsg:
    onu_id: int
    wavelength_id: int
    start_time: SimTime
    length_bytes: int
    cycle_tag: int = 0


class OnuQueue:
    """FIFO of frames held as parallel arrival/size arrays.

    Frames may be appended with an arrival time in the future; they stay
    invisible to reports and drains until the clock reaches that time.
    Storage grows geometrically and keeps a running byte total, so reports
    and drains cost O(log n) plus the frames they send, however long the
    backlog gets.
    """

    def __init__(self, owner: int = -1) -> None:
        self.owner = owner
        self._arrivals = np.empty(_INITIAL_CAPACITY, dtype=np.int64)
        self._sizes = np.empty(_INITIAL_CAPACITY, dtype=np.int64)
        # _cum[i] is the byte count enqueued ahead of slot i
        self._cum = np.zeros(_INITIAL_CAPACITY + 1, dtype=np.int64)
        self._head = 0
        self._tail = 0
        self.last_arrival: SimTime = -1
        self.enqueued_bytes = 0
        self.drained_bytes = 0

    def append(self, arrival: SimTime, size: int) -> None:
        self.extend(np.array([arrival], dtype=np.int64), np.array([size], dtype=np.int64))

    def extend(self, arrivals: np.ndarray, sizes: np.ndarray) -> None:
        """Append frames in arrival order behind everything already queued."""
        n = len(arrivals)
        if n == 0:
            return
        if arrivals[0] < self.last_arrival or (n > 1 and np.any(np.diff(arrivals) < 0)):
            raise ValueError("Frames must be appended in non-decreasing arrival order")
        self._reserve(n)
        tail = self._tail
        self._arrivals[tail : tail + n] = arrivals
        self._sizes[tail : tail + n] = sizes
        self._cum[tail + 1 : tail + n + 1] = self._cum[tail] + np.cumsum(sizes)
        self._tail = tail + n
        self.last_arrival = int(arrivals[-1])
        self.enqueued_bytes += int(self._cum[self._tail] - self._cum[tail])

    def _reserve(self, n: int) -> None:
        if self._tail + n <= len(self._arrivals):
            return
        live = self._tail - self._head
        capacity = max(_INITIAL_CAPACITY, 2 * (live + n))
        arrivals = np.empty(capacity, dtype=np.int64)
        sizes = np.empty(capacity, dtype=np.int64)
        cum = np.zeros(capacity + 1, dtype=np.int64)
        arrivals[:live] = self._arrivals[self._head : self._tail]
        sizes[:live] = self._sizes[self._head : self._tail]
        cum[: live + 1] = self._cum[self._head : self._tail + 1] - self._cum[self._head]
        self._arrivals, self._sizes, self._cum = arrivals, sizes, cum
        self._head, self._tail = 0, live

    def _live(self) -> tuple[np.ndarray, np.ndarray]:
        return self._arrivals[self._head : self._tail], self._sizes[self._head : self._tail]

    def _visible(self, t: SimTime) -> int:
        """Slot just past the last frame that has arrived by t."""
        return self._head + int(np.searchsorted(self._arrivals[self._head : self._tail], t, side="right"))

    def __len__(self) -> int:
        return self._tail - self._head

    def backlog_at(self, t: SimTime) -> int:
        """Bytes of frames that have arrived by t and are still queued."""
        return int(self._cum[self._visible(t)] - self._cum[self._head])

    def future_bytes(self, t: SimTime) -> int:
        """Bytes appended with an arrival strictly after t."""
        return int(self._cum[self._tail] - self._cum[self._visible(t)])

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Copies of the queued (arrivals, sizes), visible or not."""
        arrivals, sizes = self._live()
        return arrivals.copy(), sizes.copy()

    def frames(self) -> list[Frame]:
        """Snapshot of every queued frame, visible or not."""
        arrivals, sizes = self._live()
        return [Frame(int(s), int(a), self.owner) for a, s in zip(arrivals, sizes, strict=True)]

    def drain(self, start: SimTime, length_bytes: int, byte_ps: SimTime) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Remove the frames sent in a window of length_bytes opening at start.

        Frame j goes out at max(cursor, arrival_j) and must finish before the
        window closes; the first frame that does not fit ends the burst.

        Returns:
            (arrivals, sizes, end_times) of the sent frames, end times in ONU time.
        """
        if length_bytes <= 0 or self._tail == self._head:
            return _EMPTY, _EMPTY, _EMPTY
        head = self._head
        arrivals, sizes = self._live()
        limit = start + length_bytes * byte_ps
        k = int(np.searchsorted(arrivals, limit, side="left"))
        # no frame past length_bytes of cumulative size can fit the window
        sent_cum = self._cum[head + 1 : self._tail + 1]
        fitting = int(np.searchsorted(sent_cum, self._cum[head] + length_bytes, side="right"))
        k = min(k, fitting)
        if k == 0:
            return _EMPTY, _EMPTY, _EMPTY
        a = arrivals[:k]
        s = sizes[:k]
        before = (self._cum[head : head + k] - self._cum[head]) * byte_ps
        cursor = before + np.maximum(start, np.maximum.accumulate(a - before))
        ends = cursor + s * byte_ps
        n = int(np.searchsorted(ends, limit, side="right"))
        if n == 0:
            return _EMPTY, _EMPTY, _EMPTY
        sent_a, sent_s, sent_end = a[:n].copy(), s[:n].copy(), ends[:n].copy()
        self._head = head + n
        self.drained_bytes += int(self._cum[head + n] - self._cum[head])
        return sent_a, sent_s, sent_end


@dataclass
class Onu:
    """Subscriber-side endpoint. Transmits only inside windows it was granted."""

    id: int
    customer_id: int
    distance_m: float
    kind: OnuKind
    guaranteed_bw_bps: int
    ingress_rate_bps: int | None = None
    queue: OnuQueue = field(init=False)
    pending_grant: GateMsg | None = None
    last_burst_end: SimTime = 0

    def __post_init__(self) -> None:
        self.prop_ps = propagation_ps(self.distance_m)
        self.queue = OnuQueue(self.id)

    @property
    def is_mfh(self) -> bool:
        return self.kind is OnuKind.MFH


def enqueue_frame(onu: Onu, frame: Frame) -> None:
    """Append one frame at the tail of the ONU queue."""
    onu.queue.append(frame.arrival_time, frame.size_bytes)


def generate_report(onu: Onu, t: SimTime) -> ReportMsg:
    """Piggybacked report carrying the ONU backlog at t."""
    return ReportMsg(onu_id=onu.id, queue_bytes=onu.queue.backlog_at(t), gen_time=t)


@dataclass
class BurstResult:
    """Everything one executed grant produced."""

    onu_id: int
    wavelength_id: int
    arrivals: np.ndarray
    sizes: np.ndarray
    completions: np.ndarray
    report: ReportMsg
    report_arrival: SimTime
    olt_start: SimTime
    olt_end: SimTime
    granted_bytes: int

    @property
    def payload_bytes(self) -> int:
        return int(self.sizes.sum())

    @property
    def wasted_bytes(self) -> int:
        return self.granted_bytes - self.payload_bytes

    @property
    def transmission_end(self) -> SimTime:
        """Instant the last payload byte reaches the OLT (the burst start if empty)."""
        return int(self.completions[-1]) if len(self.completions) else self.olt_start


def execute_grant(onu: Onu, gate: GateMsg, channel: WavelengthChannel) -> BurstResult:
    """Send the ONU's burst for a delivered gate at gate.start_time.

    Raises:
        OverlapDetected: If the ONU does not hold this gate or the burst
            would overrun its reserved window.
    """
    if onu.pending_grant is not gate:
        raise OverlapDetected(f"ONU {onu.id} transmitting without holding gate {gate}")
    onu.pending_grant = None
    byte_ps = channel.byte_ps
    arrivals, sizes, ends = onu.queue.drain(gate.start_time, gate.length_bytes, byte_ps)
    gen_time = int(ends[-1]) if len(ends) else gate.start_time
    report = generate_report(onu, gen_time)
    report_end = gen_time + REPORT_BYTES * byte_ps
    window_end = gate.start_time + (gate.length_bytes + REPORT_BYTES) * byte_ps
    if report_end > window_end:
        raise OverlapDetected(f"ONU {onu.id} burst ends at {report_end} ps past its window end {window_end} ps")
    olt_start = gate.start_time + onu.prop_ps
    olt_end = window_end + onu.prop_ps
    busy_end = olt_end if channel.clip_end is None else min(olt_end, channel.clip_end)
    channel.busy_ps += max(0, busy_end - olt_start)
    if channel.record_bursts:
        channel.bursts.append((olt_start, olt_end, onu.id))
    onu.last_burst_end = window_end
    return BurstResult(
        onu_id=onu.id,
        wavelength_id=channel.id,
        arrivals=arrivals,
        sizes=sizes,
        completions=ends + onu.prop_ps,
        report=report,
        report_arrival=report_end + onu.prop_ps,
        olt_start=olt_start,
        olt_end=olt_end,
        granted_bytes=gate.length_bytes,
    )
