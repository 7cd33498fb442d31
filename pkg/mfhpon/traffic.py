"""
Seeded traffic sources feeding the ONU queues.

MFH ONUs receive one burst of Ethernet frames from their DU every burst
period over a local 100 Gbps link; the byte count of each burst is Poisson
distributed around the DU's offered load. Conventional ONUs receive
Poisson frame arrivals with a trimodal frame-size mix.

Every source writes straight into its ONU queue, possibly ahead of the
clock: frames only become visible once their arrival time is reached.
MFH bursts are drawn a full WSI lead ahead of emission and recorded in a
WsiLedger, which is what the OLT reads when it predicts MFH requests.
"""

from __future__ import annotations

import bisect
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from mfhpon.engine import BITS_PER_BYTE, PS_PER_SECOND, SimTime, SimulationError, byte_time_ps, us_to_ps
from mfhpon.pon import MAX_FRAME_BYTES, MIN_FRAME_BYTES, OnuQueue

logger = logging.getLogger(__name__)

DEFAULT_BURST_PERIOD: SimTime = us_to_ps(250)
DEFAULT_INGRESS_RATE_BPS = 100 * 10**9
DEFAULT_WSI_LEAD: SimTime = us_to_ps(4000)

# Lookups that end before this instant never run out of ledger.
UNBOUNDED: SimTime = 2**62

FRAME_SIZES = np.array([64, 594, 1518], dtype=np.int64)
FRAME_SIZE_WEIGHTS = np.array([0.47, 0.05, 0.48])
MEAN_FRAME_BYTES = float(FRAME_SIZES @ FRAME_SIZE_WEIGHTS)

RESIDENTIAL_PEAK_BPS = (4_170_000_000, 4_445_000_000, 3_927_000_000)
COMMERCIAL_PEAK_BPS = (4_287_000_000, 4_041_000_000, 4_440_000_000)


class HorizonExceeded(SimulationError):
    """A WSI lookup reached past the bursts drawn so far."""


def make_rng(seed: int, stream_id: int) -> np.random.Generator:
    """Independent PCG64 stream for one source of one replication."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,))))


@dataclass(frozen=True)
class MfhSourceConfig:
    mean_load_bps: float
    burst_period: SimTime = DEFAULT_BURST_PERIOD
    ingress_rate_bps: int = DEFAULT_INGRESS_RATE_BPS

    def __post_init__(self) -> None:
        if self.burst_period <= 0:
            raise ValueError(f"Burst period must be positive, got {self.burst_period} ps")
        if self.mean_load_bps < 0:
            raise ValueError(f"Mean load must be non-negative, got {self.mean_load_bps}")
        if self.mean_load_bps >= self.ingress_rate_bps:
            raise ValueError(
                f"Mean load {self.mean_load_bps:.0f} bit/s does not fit the {self.ingress_rate_bps} bit/s ingress link"
            )

    @property
    def mean_burst_bytes(self) -> float:
        return self.mean_load_bps * self.burst_period / (BITS_PER_BYTE * PS_PER_SECOND)


@dataclass(frozen=True)
class ScenarioLoadTable:
    """Peak MFH loads and the off-peak multipliers of the tidal scenarios."""

    residential_peak_bps: tuple[int, ...] = RESIDENTIAL_PEAK_BPS
    commercial_peak_bps: tuple[int, ...] = COMMERCIAL_PEAK_BPS
    multipliers: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {"18h": (0.381, 1.0), "24h": (1.0, 0.081), "custom": (1.0, 1.0)}
    )

    @property
    def peak_bps(self) -> tuple[int, ...]:
        return self.residential_peak_bps + self.commercial_peak_bps

    def mean_loads(self, scenario: str) -> tuple[float, ...]:
        """Offered MFH load per ONU, residential ONUs first."""
        try:
            residential, commercial = self.multipliers[scenario]
        except KeyError:
            raise KeyError(f"Unknown scenario {scenario!r}; expected one of {sorted(self.multipliers)}") from None
        return tuple(p * residential for p in self.residential_peak_bps) + tuple(
            p * commercial for p in self.commercial_peak_bps
        )

    def peak_mask(self, scenario: str) -> tuple[bool, ...]:
        """Which MFH ONUs are in their peak hour under the scenario."""
        residential, commercial = self.multipliers[scenario]
        return (residential >= 1.0,) * len(self.residential_peak_bps) + (commercial >= 1.0,) * len(
            self.commercial_peak_bps
        )


def mfh_burst_bytes(rng: np.random.Generator, mean_load_bps: float, burst_period: SimTime) -> int:
    """Poisson byte count of one DU burst."""
    lam = mean_load_bps * burst_period / (BITS_PER_BYTE * PS_PER_SECOND)
    if lam <= 0:
        return 0
    return int(rng.poisson(lam))


def serialize_burst(n_bytes: int) -> np.ndarray:
    """Split a burst into maximum-size frames plus one remainder padded to the minimum size."""
    full, rest = divmod(n_bytes, MAX_FRAME_BYTES)
    sizes = np.full(full + (1 if rest else 0), MAX_FRAME_BYTES, dtype=np.int64)
    if rest:
        sizes[-1] = max(rest, MIN_FRAME_BYTES)
    return sizes


class WsiLedger:
    """Per-ONU record of MFH burst emissions, in emission order.

    Byte counts are the serialized sizes, so a lookup equals what the ONU
    queue actually receives.
    """

    def __init__(self, ingress_rate_bps: int = DEFAULT_INGRESS_RATE_BPS) -> None:
        self.ingress_byte_ps = byte_time_ps(ingress_rate_bps)
        self._times: dict[int, list[SimTime]] = {}
        self._sizes: dict[int, list[int]] = {}
        self._cumulative: dict[int, list[int]] = {}
        self._horizon: dict[int, SimTime] = {}
        self._max_span: dict[int, SimTime] = {}
        self._sources: dict[int, TrafficSource] = {}

    def attach(self, onu_id: int, source: TrafficSource) -> None:
        self._times[onu_id] = []
        self._sizes[onu_id] = []
        self._cumulative[onu_id] = [0]
        self._horizon[onu_id] = 0
        self._max_span[onu_id] = 0
        self._sources[onu_id] = source

    def __contains__(self, onu_id: int) -> bool:
        return onu_id in self._sources

    def record(self, onu_id: int, emission_time: SimTime, n_bytes: int) -> None:
        times = self._times[onu_id]
        if times and emission_time <= times[-1]:
            raise ValueError(f"ONU {onu_id}: burst at {emission_time} ps is not after {times[-1]} ps")
        times.append(emission_time)
        self._sizes[onu_id].append(n_bytes)
        self._cumulative[onu_id].append(self._cumulative[onu_id][-1] + n_bytes)
        self._max_span[onu_id] = max(self._max_span[onu_id], n_bytes * self.ingress_byte_ps)

    def set_horizon(self, onu_id: int, horizon: SimTime) -> None:
        """Every burst emitted before horizon is recorded."""
        self._horizon[onu_id] = max(self._horizon[onu_id], horizon)

    def horizon(self, onu_id: int) -> SimTime:
        return self._horizon[onu_id]

    def extend(self, onu_id: int, until: SimTime) -> None:
        """Ask the ONU's source to draw its bursts up to until."""
        self._sources[onu_id].advance(until)

    def wsi_lookup(self, onu_id: int, start: SimTime, end: SimTime) -> int:
        """Bytes of bursts emitted in (start, end].

        Raises:
            HorizonExceeded: If end is not covered by the drawn bursts.
        """
        if end >= self._horizon[onu_id]:
            raise HorizonExceeded(f"ONU {onu_id}: WSI known until {self._horizon[onu_id]} ps, asked for {end} ps")
        if end <= start:
            return 0
        times = self._times[onu_id]
        cumulative = self._cumulative[onu_id]
        return cumulative[bisect.bisect_right(times, end)] - cumulative[bisect.bisect_right(times, start)]

    def in_transit(self, onu_id: int, t: SimTime) -> int:
        """Bytes of bursts emitted at or before t that have not fully reached the ONU by t."""
        times = self._times[onu_id]
        sizes = self._sizes[onu_id]
        span = self._max_span[onu_id]
        total = 0
        j = bisect.bisect_right(times, t) - 1
        while j >= 0 and t - times[j] < span:
            total += sizes[j] - _arrived_bytes(sizes[j], t - times[j], self.ingress_byte_ps)
            j -= 1
        return total

    def emitted_bytes(self, onu_id: int, start: SimTime, end: SimTime) -> int:
        """Ledger sum over (start, end] with no horizon check."""
        times = self._times[onu_id]
        cumulative = self._cumulative[onu_id]
        return cumulative[bisect.bisect_right(times, end)] - cumulative[bisect.bisect_right(times, start)]


def _arrived_bytes(burst_bytes: int, elapsed: SimTime, byte_ps: SimTime) -> int:
    """Serialized bytes of a burst whose frames have fully arrived after elapsed ps."""
    streamed = elapsed // byte_ps
    if streamed >= burst_bytes:
        return burst_bytes
    return (streamed // MAX_FRAME_BYTES) * MAX_FRAME_BYTES


class TrafficSource(Protocol):
    onu_id: int

    def advance(self, until: SimTime) -> None: ...


class MfhSource:
    """Periodic DU bursts into one MFH ONU queue."""

    def __init__(
        self,
        onu_id: int,
        queue: OnuQueue,
        config: MfhSourceConfig,
        rng: np.random.Generator,
        ledger: WsiLedger,
        phase: SimTime = 0,
    ) -> None:
        self.onu_id = onu_id
        self.queue = queue
        self.config = config
        self.rng = rng
        self.ledger = ledger
        self.ingress_byte_ps = byte_time_ps(config.ingress_rate_bps)
        self.next_emission = phase
        self.bursts_drawn = 0
        ledger.attach(onu_id, self)

    def advance(self, until: SimTime) -> None:
        """Draw, record and enqueue every burst emitted at or before until."""
        period = self.config.burst_period
        while self.next_emission <= until:
            t = self.next_emission
            n_bytes = mfh_burst_bytes(self.rng, self.config.mean_load_bps, period)
            sizes = serialize_burst(n_bytes)
            if len(sizes):
                arrivals = t + np.cumsum(sizes) * self.ingress_byte_ps
                self.queue.extend(arrivals, sizes)
            self.ledger.record(self.onu_id, t, int(sizes.sum()))
            self.bursts_drawn += 1
            self.next_emission = t + period
        self.ledger.set_horizon(self.onu_id, self.next_emission)


class ConventionalSource:
    """Poisson frame arrivals with the trimodal size mix, drawn lazily in chunks."""

    def __init__(
        self,
        onu_id: int,
        queue: OnuQueue,
        mean_load_bps: float,
        rng: np.random.Generator,
        chunk: int = 4096,
    ) -> None:
        if mean_load_bps < 0:
            raise ValueError(f"Mean load must be non-negative, got {mean_load_bps}")
        self.onu_id = onu_id
        self.queue = queue
        self.mean_load_bps = mean_load_bps
        self.rng = rng
        self.chunk = chunk
        self.frames_drawn = 0
        self._last = 0
        self._covered: SimTime = 0
        # ps between frames on average
        self._mean_gap = (
            BITS_PER_BYTE * MEAN_FRAME_BYTES * PS_PER_SECOND / mean_load_bps if mean_load_bps > 0 else 0.0
        )

    def advance(self, until: SimTime) -> None:
        """Make sure every frame arriving at or before until is in the queue."""
        if self._mean_gap == 0.0:
            return
        while self._covered < until:
            gaps = np.maximum(1, np.rint(self.rng.exponential(self._mean_gap, self.chunk))).astype(np.int64)
            arrivals = self._last + np.cumsum(gaps)
            sizes = self.rng.choice(FRAME_SIZES, size=self.chunk, p=FRAME_SIZE_WEIGHTS)
            self.queue.extend(arrivals, sizes)
            self._last = int(arrivals[-1])
            self._covered = self._last
            self.frames_drawn += self.chunk


def conventional_arrivals(
    rng: np.random.Generator, mean_load_bps: float, t_window: SimTime
) -> tuple[np.ndarray, np.ndarray]:
    """Arrival times and sizes of the Poisson frame stream over [0, t_window]."""
    queue = OnuQueue()
    ConventionalSource(-1, queue, mean_load_bps, rng).advance(t_window)
    arrivals, sizes = queue.arrays()
    keep = arrivals <= t_window
    return arrivals[keep], sizes[keep]


class ScriptedMfhSource:
    """Explicit (emission_time, bytes) bursts for hand-checked schedules."""

    def __init__(
        self,
        onu_id: int,
        queue: OnuQueue,
        bursts: Iterable[tuple[SimTime, int]],
        ledger: WsiLedger,
        ingress_rate_bps: int = DEFAULT_INGRESS_RATE_BPS,
    ) -> None:
        self.onu_id = onu_id
        self.queue = queue
        self.ledger = ledger
        self.ingress_byte_ps = byte_time_ps(ingress_rate_bps)
        self._bursts = sorted(bursts)
        self._next = 0
        ledger.attach(onu_id, self)

    def emission_times(self) -> list[SimTime]:
        return [t for t, _ in self._bursts]

    def advance(self, until: SimTime) -> None:
        while self._next < len(self._bursts) and self._bursts[self._next][0] <= until:
            t, n_bytes = self._bursts[self._next]
            sizes = serialize_burst(n_bytes)
            if len(sizes):
                self.queue.extend(t + np.cumsum(sizes) * self.ingress_byte_ps, sizes)
            self.ledger.record(self.onu_id, t, int(sizes.sum()))
            self._next += 1
        if self._next == len(self._bursts):
            self.ledger.set_horizon(self.onu_id, UNBOUNDED)
        else:
            self.ledger.set_horizon(self.onu_id, self._bursts[self._next][0])


def byte_rate(sizes: Sequence[int] | np.ndarray, duration: SimTime) -> float:
    """Average bit rate of a byte stream over duration."""
    return float(np.sum(sizes)) * BITS_PER_BYTE * PS_PER_SECOND / duration
