"""
Dynamic wavelength and bandwidth allocation policies run at the OLT.

Grant sizing (fixed, limited, gated), per-cycle window caps derived from
SLAs, the per-ONU rate meter that holds every ONU to its guaranteed
bandwidth over time, WSI-based MFH request prediction, the online excess-bandwidth
compensation used by the proposed scheme, the offline MOS-IPACT batch
share and First-Fit wavelength/start-time assignment.

Every function here works on OLT-owned state only and is free of event
scheduling; mfhpon.olt drives them from report arrivals.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

from mfhpon.engine import BITS_PER_BYTE, PS_PER_SECOND, SimTime, SimulationError
from mfhpon.pon import REPORT_BYTES, WavelengthChannel

if TYPE_CHECKING:
    from mfhpon.pon import Onu, ReportMsg
    from mfhpon.traffic import WsiLedger

logger = logging.getLogger(__name__)


class InvalidSla(SimulationError):
    """Guaranteed bandwidth or cycle cap is not strictly positive."""


class PredictionUnavailable(SimulationError):
    """No WSI exists for this ONU; use the reported backlog instead."""


class PrematureRollover(SimulationError):
    """A customer cycle was closed before every member was served."""


class Scheme(Enum):
    FIRST_FIT = "first-fit"
    FIRST_FIT_PRED = "first-fit-pred"
    MOS_IPACT = "mos-ipact"
    MOS_IPACT_PRED = "mos-ipact-pred"
    PROPOSED = "proposed"


class SharingMode(Enum):
    NONE = "none"
    OFFLINE = "offline"
    ONLINE = "online"


class Sizing(Enum):
    FIXED = "fixed"
    LIMITED = "limited"
    GATED = "gated"


_SCHEME_TRAITS: dict[Scheme, tuple[bool, SharingMode]] = {
    Scheme.FIRST_FIT: (False, SharingMode.NONE),
    Scheme.FIRST_FIT_PRED: (True, SharingMode.NONE),
    Scheme.MOS_IPACT: (False, SharingMode.OFFLINE),
    Scheme.MOS_IPACT_PRED: (True, SharingMode.OFFLINE),
    Scheme.PROPOSED: (True, SharingMode.ONLINE),
}


@dataclass(frozen=True)
class SchemeConfig:
    """Which DWBA scheme runs and how it sizes MFH grants."""

    scheme: Scheme
    prediction_enabled: bool
    sharing_mode: SharingMode
    sizing: Sizing = Sizing.LIMITED
    prediction_error: float = 0.0

    def __post_init__(self) -> None:
        if self.scheme is Scheme.PROPOSED and not (
            self.prediction_enabled and self.sharing_mode is SharingMode.ONLINE and self.sizing is Sizing.LIMITED
        ):
            raise ValueError("The proposed scheme needs prediction, online sharing and limited sizing")
        if self.scheme in (Scheme.FIRST_FIT, Scheme.FIRST_FIT_PRED) and self.sharing_mode is not SharingMode.NONE:
            raise ValueError(f"{self.scheme.value} does not share bandwidth")

    @classmethod
    def for_scheme(cls, scheme: Scheme, sizing: Sizing = Sizing.LIMITED, prediction_error: float = 0.0) -> SchemeConfig:
        prediction, sharing = _SCHEME_TRAITS[scheme]
        return cls(scheme, prediction, sharing, sizing, prediction_error)


def compute_w_max(guaranteed_bw_bps: int, t_max: SimTime) -> int:
    """Per-cycle window cap in bytes: floor(B_k * T_max / 8), T_max in seconds.

    Raises:
        InvalidSla: If either argument is not positive.
    """
    if guaranteed_bw_bps <= 0:
        raise InvalidSla(f"Guaranteed bandwidth must be positive, got {guaranteed_bw_bps} bit/s")
    if t_max <= 0:
        raise InvalidSla(f"Maximum cycle length must be positive, got {t_max} ps")
    return (guaranteed_bw_bps * t_max) // (BITS_PER_BYTE * PS_PER_SECOND)


@dataclass(frozen=True)
class SlaProfile:
    guaranteed_bw_bps: int
    w_max_bytes: int
    customer_id: int

    @classmethod
    def derive(cls, guaranteed_bw_bps: int, t_max: SimTime, customer_id: int) -> SlaProfile:
        w_max = compute_w_max(guaranteed_bw_bps, t_max)
        if w_max <= 0:
            raise InvalidSla(f"{guaranteed_bw_bps} bit/s over {t_max} ps leaves an empty window")
        return cls(guaranteed_bw_bps, w_max, customer_id)


UNITS_PER_BYTE = BITS_PER_BYTE * PS_PER_SECOND


@dataclass
class RateMeter:
    """Guaranteed-rate budget of one ONU.

    The budget refills at B_k and holds at most one W_max window, so over
    any interval of length T an ONU is granted at most B_k * T / 8 + W_max
    bytes of its own. Amounts are kept in bit-picoseconds, which keeps
    every refill exact. The balance may go negative when lent slack is
    taken after the lender already spent its own share.
    """

    rate_bps: int
    depth: int
    units: int
    stamp: SimTime = 0

    @classmethod
    def for_sla(cls, guaranteed_bw_bps: int, t_max: SimTime) -> RateMeter:
        if guaranteed_bw_bps <= 0 or t_max <= 0:
            raise InvalidSla(f"Rate meter needs a positive rate and cycle, got {guaranteed_bw_bps} bit/s, {t_max} ps")
        depth = guaranteed_bw_bps * t_max
        return cls(guaranteed_bw_bps, depth, depth)

    def _units_at(self, t: SimTime) -> int:
        if t <= self.stamp:
            return self.units
        return min(self.depth, self.units + self.rate_bps * (t - self.stamp))

    def available(self, t: SimTime) -> int:
        """Whole bytes the ONU may use at t."""
        return max(0, self._units_at(t)) // UNITS_PER_BYTE

    def ready_at(self, n_bytes: int) -> SimTime:
        """Earliest instant the budget covers n_bytes (n_bytes <= W_max)."""
        needed = n_bytes * UNITS_PER_BYTE - self.units
        if needed <= 0:
            return self.stamp
        return self.stamp + -(-needed // self.rate_bps)

    def spend(self, n_bytes: int, t: SimTime) -> None:
        t = max(t, self.stamp)
        self.units = self._units_at(t) - n_bytes * UNITS_PER_BYTE
        self.stamp = t


def size_grant_limited(request_bytes: int, w_max_bytes: int) -> int:
    return min(request_bytes, w_max_bytes)


def size_grant_gated(request_bytes: int) -> int:
    return request_bytes


def size_grant_fixed(w_max_bytes: int) -> int:
    return w_max_bytes


def size_grant(sizing: Sizing, request_bytes: int, w_max_bytes: int) -> int:
    if sizing is Sizing.LIMITED:
        return size_grant_limited(request_bytes, w_max_bytes)
    if sizing is Sizing.GATED:
        return size_grant_gated(request_bytes)
    return size_grant_fixed(w_max_bytes)


def predict_request(
    report: ReportMsg,
    onu: Onu,
    grant_start_estimate: SimTime,
    wsi: WsiLedger,
    epsilon: float = 0.0,
) -> int:
    """Backlog the ONU will hold when its grant opens, from the DU's WSI.

    The increment covers bursts emitted in (gen_time, grant_start_estimate]
    plus bytes of earlier bursts still crossing the DU-ONU link at gen_time;
    epsilon scales the increment, so -1 returns the reported backlog.

    Raises:
        PredictionUnavailable: For conventional ONUs.
    """
    if not onu.is_mfh:
        raise PredictionUnavailable(f"ONU {onu.id} has no wireless scheduling information")
    increment = wsi.in_transit(onu.id, report.gen_time)
    if grant_start_estimate > report.gen_time:
        increment += wsi.wsi_lookup(onu.id, report.gen_time, grant_start_estimate)
    return report.queue_bytes + max(0, round((1.0 + epsilon) * increment))


@dataclass
class CycleRecord:
    """Totals of one closed customer cycle, for the sharing-conservation check."""

    cycle_index: int
    granted_bytes: int
    w_max_bytes: int
    excess_prev_at_start: int


@dataclass
class CustomerGroup:
    """Excess-bandwidth state of a multi-ONU customer."""

    customer_id: int
    member_onus: frozenset[int]
    excess_prev: int = 0
    excess_curr: int = 0
    served_this_cycle: set[int] = field(default_factory=set)
    cycle_index: int = 0
    pinned: bool = False
    cycle_granted: int = 0
    cycle_used: dict[int, int] = field(default_factory=dict)
    member_w_max: dict[int, int] = field(default_factory=dict)
    prev_at_start: int = 0
    history: list[CycleRecord] = field(default_factory=list, repr=False)

    def at_boundary(self) -> bool:
        return self.served_this_cycle == self.member_onus

    @property
    def cycle_w_max(self) -> int:
        """Sum of W_max over the members, each counted once."""
        return sum(self.member_w_max.get(onu, 0) for onu in self.member_onus)


@dataclass(frozen=True)
class SharedGrant:
    """How one proposed-scheme grant was composed."""

    grant_bytes: int
    own_bytes: int
    banked_bytes: int = 0
    from_prev: int = 0
    from_curr: int = 0


def proposed_grant(
    request_bytes: int,
    onu_id: int,
    w_max_bytes: int,
    group: CustomerGroup,
    available_bytes: int | None = None,
) -> SharedGrant:
    """Size one MFH grant with online excess compensation.

    Within one customer cycle a member's own share (granted plus banked)
    never exceeds its W_max. On its first service of the cycle an
    underloaded member banks the slack it could still have used,
    min(own share left, available_bytes) - request, in excess_curr; later
    services in the same cycle bank nothing. Overloaded members get their
    remaining own share plus what the pools cover, excess_prev before
    excess_curr. A pinned group keeps no cycle state and sizes limited.
    """
    if onu_id not in group.member_onus:
        raise ValueError(f"ONU {onu_id} is not a member of customer {group.customer_id}")
    if group.pinned:
        own = size_grant_limited(request_bytes, w_max_bytes)
        return SharedGrant(own, own)
    group.member_w_max[onu_id] = w_max_bytes
    used = group.cycle_used.get(onu_id, 0)
    own_cap = max(0, w_max_bytes - used)
    first = onu_id not in group.served_this_cycle
    if request_bytes <= own_cap:
        banked = 0
        if first:
            room = own_cap if available_bytes is None else min(own_cap, available_bytes)
            banked = max(0, room - request_bytes)
        group.excess_curr += banked
        group.cycle_used[onu_id] = used + request_bytes + banked
        shared = SharedGrant(request_bytes, request_bytes, banked_bytes=banked)
    else:
        deficit = request_bytes - own_cap
        from_prev = min(deficit, group.excess_prev)
        from_curr = min(deficit - from_prev, group.excess_curr)
        group.excess_prev -= from_prev
        group.excess_curr -= from_curr
        group.cycle_used[onu_id] = used + own_cap
        shared = SharedGrant(own_cap + from_prev + from_curr, own_cap, from_prev=from_prev, from_curr=from_curr)
    group.served_this_cycle.add(onu_id)
    group.cycle_granted += shared.grant_bytes
    return shared


def cycle_rollover(group: CustomerGroup) -> CustomerGroup:
    """Close the customer cycle: keep current excess, drop the previous one.

    Raises:
        PrematureRollover: If some member has not been served this cycle.
    """
    if not group.at_boundary():
        missing = sorted(group.member_onus - group.served_this_cycle)
        raise PrematureRollover(f"Customer {group.customer_id} cycle {group.cycle_index} still waits for {missing}")
    group.history.append(CycleRecord(group.cycle_index, group.cycle_granted, group.cycle_w_max, group.prev_at_start))
    logger.debug(
        "Customer %d cycle %d closed: prev %d -> %d B",
        group.customer_id,
        group.cycle_index,
        group.excess_prev,
        group.excess_curr,
    )
    group.excess_prev = group.excess_curr
    group.excess_curr = 0
    group.served_this_cycle = set()
    group.cycle_index += 1
    group.cycle_granted = 0
    group.cycle_used = {}
    group.prev_at_start = group.excess_prev
    return group


def mos_ipact_batch(requests: Mapping[int, int], w_max: Mapping[int, int]) -> dict[int, int]:
    """Offline per-cycle sharing over one complete set of member reports.

    w_max maps each member to its usable window this cycle. The pool is
    the total slack of underloaded members; overloaded members take
    min(remaining pool, deficit) in ascending ONU id order.
    """
    pool = sum(max(0, w_max[onu] - req) for onu, req in requests.items())
    grants: dict[int, int] = {}
    for onu in sorted(requests):
        req, cap = requests[onu], w_max[onu]
        if req <= cap:
            grants[onu] = req
            continue
        share = min(pool, req - cap)
        pool -= share
        grants[onu] = cap + share
    return grants


def mos_ipact_lenders(requests: Mapping[int, int], w_max: Mapping[int, int], borrowed: int) -> dict[int, int]:
    """Bytes each underloaded member gave up to cover borrowed, ascending ONU id."""
    taken: dict[int, int] = {}
    for onu in sorted(requests):
        if borrowed <= 0:
            break
        slack = max(0, w_max[onu] - requests[onu])
        if slack:
            taken[onu] = min(slack, borrowed)
            borrowed -= taken[onu]
    return taken


def first_fit_candidate(
    channels: Sequence[WavelengthChannel], prop_ps: SimTime, earliest_start: SimTime
) -> tuple[WavelengthChannel, SimTime]:
    """Earliest-available channel and its OLT-side start, lowest id on ties."""
    best: WavelengthChannel | None = None
    best_start = 0
    for channel in channels:
        candidate = max(earliest_start + prop_ps, channel.horizon)
        if best is None or candidate < best_start:
            best, best_start = channel, candidate
    if best is None:
        raise ValueError("No upstream wavelength configured")
    return best, best_start


def first_fit_assign(
    channels: Sequence[WavelengthChannel], burst_bytes: int, onu: Onu, earliest_start: SimTime
) -> tuple[int, SimTime]:
    """Pick a wavelength and ONU-side start for a burst and book it.

    The booked window covers burst_bytes plus the report slot; the
    channel horizon moves past it by one guard time.
    """
    channel, olt_start = first_fit_candidate(channels, onu.prop_ps, earliest_start)
    channel.reserve(olt_start, burst_bytes + REPORT_BYTES)
    return channel.id, olt_start - onu.prop_ps
