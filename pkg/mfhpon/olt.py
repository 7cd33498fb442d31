"""
OLT-side scheduler.

Turns every report that reaches the OLT into a gate: conventional ONUs get
limited grants, MFH ONUs get the grant their DWBA scheme computes (sizing
policy, optional WSI prediction, and no, offline or online sharing inside
the MFH customer). Every ONU's own bytes pass through its rate meter, so no
burst starts before the guaranteed rate has paid for it. Gates are placed
with First-Fit and delivered after the downstream propagation delay.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

from mfhpon.dwba import (
    CustomerGroup,
    RateMeter,
    SchemeConfig,
    SharingMode,
    Sizing,
    cycle_rollover,
    first_fit_assign,
    first_fit_candidate,
    mos_ipact_batch,
    mos_ipact_lenders,
    predict_request,
    proposed_grant,
    size_grant,
    size_grant_limited,
)
from mfhpon.engine import Engine, EventKind, SimTime
from mfhpon.pon import REPORT_BYTES, GateMsg, Onu, ReportMsg, WavelengthChannel
from mfhpon.traffic import HorizonExceeded, WsiLedger

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GrantRecord:
    """One issued gate, as the OLT decided it."""

    issued_at: SimTime
    onu_id: int
    wavelength_id: int
    start_time: SimTime
    length_bytes: int
    request_bytes: int


@dataclass
class _PendingBatch:
    """Member reports of one MOS-IPACT cycle index."""

    requests: dict[int, int] = field(default_factory=dict)
    caps: dict[int, int] = field(default_factory=dict)
    waiting: dict[int, ReportMsg] = field(default_factory=dict)


class OltScheduler:
    """Per-replication OLT state and the report handler."""

    def __init__(
        self,
        engine: Engine,
        channels: Sequence[WavelengthChannel],
        onus: Sequence[Onu],
        w_max: dict[int, int],
        scheme: SchemeConfig,
        ledger: WsiLedger,
        t_max: SimTime,
        groups: Sequence[CustomerGroup] = (),
        record_grants: bool = False,
    ) -> None:
        self.engine = engine
        self.channels = list(channels)
        self.onus = {onu.id: onu for onu in onus}
        self.w_max = w_max
        self.meters = {onu.id: RateMeter.for_sla(onu.guaranteed_bw_bps, t_max) for onu in onus}
        self.scheme = scheme
        self.ledger = ledger
        self.groups = {group.customer_id: group for group in groups}
        self.record_grants = record_grants
        self.grants: list[GrantRecord] = []
        self.onu_cycle: dict[int, int] = dict.fromkeys(self.onus, 0)
        self._window_end: dict[int, SimTime] = dict.fromkeys(self.onus, 0)
        self._batches: dict[tuple[int, int], _PendingBatch] = {}
        self.releases = 0

    def _group_of(self, onu: Onu) -> CustomerGroup | None:
        group = self.groups.get(onu.customer_id)
        return group if group is not None and onu.id in group.member_onus else None

    def _earliest_start(self, onu: Onu, t: SimTime, metered_bytes: int = 0) -> SimTime:
        return max(t + onu.prop_ps, self._window_end[onu.id], self.meters[onu.id].ready_at(metered_bytes))

    def _metered(self, onu: Onu, grant_bytes: int) -> int:
        """Own bytes of a grant that the rate meter pays for."""
        if onu.is_mfh and self.scheme.sizing is Sizing.GATED:
            return 0
        return grant_bytes

    def bootstrap(self) -> None:
        """Zero-byte polling gates (W_max under fixed sizing) at t=0, ascending ONU id."""
        for onu_id in sorted(self.onus):
            onu = self.onus[onu_id]
            grant = 0
            if onu.is_mfh and self.scheme.sizing is Sizing.FIXED:
                grant = self.w_max[onu_id]
            self.issue_gate(onu, grant, 0)

    def issue_gate(
        self, onu: Onu, grant_bytes: int, t: SimTime, request_bytes: int = 0, metered_bytes: int | None = None
    ) -> GateMsg:
        """Place the burst with First-Fit once the rate meter covers it, then send the gate downstream.

        metered_bytes defaults to the grant itself; bytes borrowed from other
        members are left out of it.
        """
        metered = self._metered(onu, grant_bytes) if metered_bytes is None else metered_bytes
        meter = self.meters[onu.id]
        earliest = self._earliest_start(onu, t, metered)
        wavelength_id, start = first_fit_assign(self.channels, grant_bytes, onu, earliest)
        meter.spend(metered, start)
        channel = self.channels[wavelength_id]
        self._window_end[onu.id] = start + channel.transmission_time(grant_bytes + REPORT_BYTES)
        gate = GateMsg(onu.id, wavelength_id, start, grant_bytes, self.onu_cycle[onu.id])
        self.engine.schedule_event(t + onu.prop_ps, EventKind.GATE_ARRIVAL_AT_ONU, onu.id, gate)
        if self.record_grants:
            self.grants.append(GrantRecord(t, onu.id, wavelength_id, start, grant_bytes, request_bytes))
        return gate

    def _tentative_start(self, onu: Onu, t: SimTime) -> SimTime:
        _, olt_start = first_fit_candidate(self.channels, onu.prop_ps, self._earliest_start(onu, t))
        return olt_start - onu.prop_ps

    def _request(self, report: ReportMsg, onu: Onu, t: SimTime) -> int:
        """Reported backlog, or its WSI prediction for the tentative grant start."""
        if not (self.scheme.prediction_enabled and onu.is_mfh):
            return report.queue_bytes
        start = self._tentative_start(onu, t)
        try:
            return predict_request(report, onu, start, self.ledger, self.scheme.prediction_error)
        except HorizonExceeded:
            self.ledger.extend(onu.id, start)
            return predict_request(report, onu, start, self.ledger, self.scheme.prediction_error)

    def on_report(self, report: ReportMsg, t: SimTime) -> None:
        onu = self.onus[report.onu_id]
        cycle = self.onu_cycle[onu.id]
        self.onu_cycle[onu.id] = cycle + 1
        if not onu.is_mfh:
            self.issue_gate(onu, size_grant_limited(report.queue_bytes, self.w_max[onu.id]), t, report.queue_bytes)
            return
        w_max = self.w_max[onu.id]
        request = self._request(report, onu, t)
        group = self._group_of(onu)
        sharing = self.scheme.sharing_mode
        if sharing is SharingMode.ONLINE and group is not None:
            meter = self.meters[onu.id]
            shared = proposed_grant(request, onu.id, w_max, group, meter.available(t))
            if shared.banked_bytes:
                meter.spend(shared.banked_bytes, t)
            self.issue_gate(onu, shared.grant_bytes, t, request, metered_bytes=shared.own_bytes)
            if group.at_boundary():
                cycle_rollover(group)
        elif sharing is SharingMode.OFFLINE and group is not None:
            self._offline_share(report, onu, group, cycle, request, t)
        else:
            self.issue_gate(onu, size_grant(self.scheme.sizing, request, w_max), t, request)

    def _offline_share(
        self, report: ReportMsg, onu: Onu, group: CustomerGroup, cycle: int, request: int, t: SimTime
    ) -> None:
        """MOS-IPACT: overloaded members wait for the whole cycle's reports.

        An underloaded member lends only the slack its rate meter still
        holds when it reports; that slack is debited from it when lent.
        """
        key = (group.customer_id, cycle)
        batch = self._batches.setdefault(key, _PendingBatch())
        w_max = self.w_max[onu.id]
        batch.requests[onu.id] = request
        if request <= w_max:
            batch.caps[onu.id] = max(request, min(w_max, self.meters[onu.id].available(t)))
            self.issue_gate(onu, size_grant(self.scheme.sizing, request, w_max), t, request)
        else:
            batch.caps[onu.id] = w_max
            batch.waiting[onu.id] = report
        if set(batch.requests) != group.member_onus:
            return
        del self._batches[key]
        if not batch.waiting:
            return
        requests = dict(batch.requests)
        for onu_id, waiting_report in batch.waiting.items():
            if self.scheme.prediction_enabled:
                requests[onu_id] = self._request(waiting_report, self.onus[onu_id], t)
        grants = mos_ipact_batch(requests, batch.caps)
        borrowed = 0
        for onu_id in sorted(batch.waiting):
            own = min(requests[onu_id], batch.caps[onu_id])
            borrowed += grants[onu_id] - own
            self.issue_gate(self.onus[onu_id], grants[onu_id], t, requests[onu_id], metered_bytes=own)
        lenders = {onu_id: req for onu_id, req in requests.items() if onu_id not in batch.waiting}
        for onu_id, lent in mos_ipact_lenders(lenders, batch.caps, borrowed).items():
            self.meters[onu_id].spend(lent, t)
        self.releases += 1
        logger.debug("Customer %d cycle %d released %d waiting gates", group.customer_id, cycle, len(batch.waiting))
