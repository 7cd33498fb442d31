"""
One replication of the upstream simulator.

Wires the engine, the wavelength channels, the ONUs and their traffic
sources, the OLT scheduler and the delay stores together, runs the event
loop to the configured end and collects everything the harness and the
invariant checks need. Scripted fixtures (explicit frames and bursts)
build the same machinery for hand-checked schedules.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TextIO

import numpy as np

from mfhpon.config import RunConfig
from mfhpon.dwba import CustomerGroup, CycleRecord, Scheme, SchemeConfig, Sizing, SlaProfile
from mfhpon.engine import Engine, Event, EventKind, SimTime, SimulationError
from mfhpon.metrics import CONVENTIONAL_CLASS, DelayStats, mfh_class
from mfhpon.olt import GrantRecord, OltScheduler
from mfhpon.pon import (
    REPORT_BYTES,
    BurstResult,
    Frame,
    GateMsg,
    Onu,
    OnuKind,
    ReportMsg,
    WavelengthChannel,
    execute_grant,
)
from mfhpon.traffic import (
    DEFAULT_BURST_PERIOD,
    DEFAULT_INGRESS_RATE_BPS,
    ConventionalSource,
    MfhSource,
    MfhSourceConfig,
    ScenarioLoadTable,
    ScriptedMfhSource,
    WsiLedger,
    make_rng,
)

logger = logging.getLogger(__name__)

MFH_CUSTOMER = 0


class InvariantViolation(SimulationError):
    """A post-run invariant check failed."""

    def __init__(self, violations: list[str]) -> None:
        super().__init__("; ".join(violations[:5]) + (f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""))
        self.violations = violations


@dataclass(frozen=True)
class OnuSpec:
    """Static description of one ONU and the traffic it receives."""

    id: int
    customer_id: int
    distance_m: float
    kind: OnuKind
    guaranteed_bw_bps: int
    mean_load_bps: float = 0.0
    bursts: tuple[tuple[SimTime, int], ...] | None = None
    frames: tuple[tuple[SimTime, int], ...] | None = None


@dataclass(frozen=True)
class Topology:
    onus: tuple[OnuSpec, ...]
    wavelengths: int
    line_rate_bps: int
    guard_ps: SimTime
    t_max_ps: SimTime
    ingress_rate_bps: int = DEFAULT_INGRESS_RATE_BPS
    burst_period_ps: SimTime = DEFAULT_BURST_PERIOD
    wsi_lead_ps: SimTime = 0
    staggered: bool = False


def build_topology(cfg: RunConfig) -> Topology:
    """ONUs 0..n_mfh-1 carry MFH (residential first, one customer); the rest are conventional."""
    table = ScenarioLoadTable(
        residential_peak_bps=tuple(cfg.mfh_peak_bps[: len(cfg.residential_peak_mbps)]),
        commercial_peak_bps=tuple(cfg.mfh_peak_bps[len(cfg.residential_peak_mbps) :]),
        multipliers={
            "18h": (cfg.offpeak_residential_18h, 1.0),
            "24h": (1.0, cfg.offpeak_commercial_24h),
            "custom": (1.0, 1.0),
        },
    )
    mfh_loads = table.mean_loads(cfg.scenario)
    specs = [
        OnuSpec(k, MFH_CUSTOMER, cfg.mfh_distances_m[k], OnuKind.MFH, cfg.mfh_guaranteed_bps[k], mfh_loads[k])
        for k in range(cfg.n_mfh_onus)
    ]
    conv_bw = cfg.conventional_guaranteed_bps
    distances = np.linspace(cfg.conventional_distance_min_m, cfg.conventional_distance_max_m, cfg.n_conventional)
    for i, distance in enumerate(distances):
        onu_id = cfg.n_mfh_onus + i
        specs.append(
            OnuSpec(
                onu_id,
                onu_id + 1,
                float(distance),
                OnuKind.CONVENTIONAL,
                conv_bw,
                conv_bw * cfg.conventional_load_fraction,
            )
        )
    return Topology(
        onus=tuple(specs),
        wavelengths=cfg.wavelengths,
        line_rate_bps=cfg.line_rate_bps,
        guard_ps=cfg.guard_ps,
        t_max_ps=cfg.t_max_ps,
        ingress_rate_bps=cfg.ingress_rate_bps,
        burst_period_ps=cfg.burst_period_ps,
        wsi_lead_ps=cfg.wsi_lead_ps,
        staggered=cfg.mfh_phase == "staggered",
    )


@dataclass
class ReplicationResult:
    """Everything one replication produced."""

    index: int
    seed: int
    duration_ps: SimTime
    guard_ps: SimTime
    stats: DelayStats
    busy_ps: dict[int, SimTime]
    dispatched: int
    generated_bytes: int = 0
    delivered_bytes: int = 0
    queued_bytes: int = 0
    in_flight_bytes: int = 0
    drained_bytes: int = 0
    mfh_generated: dict[int, int] = field(default_factory=dict)
    mfh_ledger: dict[int, int] = field(default_factory=dict)
    sharing_ledger: list[CycleRecord] = field(default_factory=list)
    pools: list[tuple[int, int]] = field(default_factory=list)
    delay_bound_violations: int = 0
    bursts: dict[int, list[tuple[SimTime, SimTime, int]]] = field(default_factory=dict)
    grants: list[GrantRecord] = field(default_factory=list)
    completions: list[tuple[int, SimTime, int, SimTime]] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)


class Simulation:
    """A fully wired replication, ready to run once."""

    def __init__(
        self,
        topology: Topology,
        scheme: SchemeConfig,
        duration_ps: SimTime,
        seed: int,
        *,
        index: int = 0,
        warmup_ps: SimTime = 0,
        pin_excess_pools: bool = False,
        check_invariants: bool = True,
        record_timeline: bool = False,
        trace: TextIO | None = None,
    ) -> None:
        self.topology = topology
        self.scheme = scheme
        self.duration_ps = duration_ps
        self.seed = seed
        self.index = index
        self.check = check_invariants
        self.record_timeline = record_timeline
        self.engine = Engine(trace=trace)
        self.channels = [
            WavelengthChannel(
                c,
                topology.line_rate_bps,
                topology.guard_ps,
                clip_end=duration_ps,
                record_bursts=check_invariants or record_timeline,
            )
            for c in range(topology.wavelengths)
        ]
        self.byte_ps = self.channels[0].byte_ps
        self.onus: dict[int, Onu] = {}
        self.w_max: dict[int, int] = {}
        self.class_of: dict[int, str] = {}
        for spec in topology.onus:
            onu = Onu(
                spec.id,
                spec.customer_id,
                spec.distance_m,
                spec.kind,
                spec.guaranteed_bw_bps,
                topology.ingress_rate_bps if spec.kind is OnuKind.MFH else None,
            )
            self.onus[spec.id] = onu
            sla = SlaProfile.derive(spec.guaranteed_bw_bps, topology.t_max_ps, spec.customer_id)
            self.w_max[spec.id] = sla.w_max_bytes
            self.class_of[spec.id] = mfh_class(spec.id) if onu.is_mfh else CONVENTIONAL_CLASS

        classes = [mfh_class(s.id) for s in topology.onus if s.kind is OnuKind.MFH]
        if any(s.kind is OnuKind.CONVENTIONAL for s in topology.onus):
            classes.append(CONVENTIONAL_CLASS)
        self.stats = DelayStats(classes, warmup=warmup_ps)

        self.ledger = WsiLedger(topology.ingress_rate_bps)
        self.mfh_sources: dict[int, MfhSource | ScriptedMfhSource] = {}
        self.conventional_sources: dict[int, ConventionalSource] = {}
        self._build_sources(topology)

        members: dict[int, set[int]] = {}
        for spec in topology.onus:
            if spec.kind is OnuKind.MFH:
                members.setdefault(spec.customer_id, set()).add(spec.id)
        self.groups = [
            CustomerGroup(customer, frozenset(ids), pinned=pin_excess_pools) for customer, ids in sorted(members.items())
        ]
        self.olt = OltScheduler(
            self.engine,
            self.channels,
            list(self.onus.values()),
            self.w_max,
            scheme,
            self.ledger,
            topology.t_max_ps,
            self.groups,
            record_grants=record_timeline,
        )

        self.delivered_bytes = 0
        self.in_flight_bytes = 0
        self.delay_bound_violations = 0
        self.completions: list[tuple[int, SimTime, int, SimTime]] = []
        self._ran = False

        engine = self.engine
        engine.register(EventKind.GATE_ARRIVAL_AT_ONU, self._on_gate_arrival)
        engine.register(EventKind.TRANSMISSION_START, self._on_transmission_start)
        engine.register(EventKind.TRANSMISSION_END, self._on_transmission_end)
        engine.register(EventKind.REPORT_ARRIVAL_AT_OLT, self._on_report_arrival)
        engine.register(EventKind.BURST_EMISSION, self._on_burst_emission)
        engine.register(EventKind.SIM_END, self._on_sim_end)

    def _build_sources(self, topology: Topology) -> None:
        mfh_ids = [s.id for s in topology.onus if s.kind is OnuKind.MFH]
        for spec in topology.onus:
            queue = self.onus[spec.id].queue
            if spec.bursts is not None:
                source = ScriptedMfhSource(spec.id, queue, spec.bursts, self.ledger, topology.ingress_rate_bps)
                self.mfh_sources[spec.id] = source
                for t in sorted({t for t, _ in spec.bursts}):
                    self.engine.schedule_event(t, EventKind.BURST_EMISSION, spec.id)
            elif spec.kind is OnuKind.MFH:
                phase = 0
                if topology.staggered and mfh_ids:
                    phase = mfh_ids.index(spec.id) * topology.burst_period_ps // len(mfh_ids)
                config = MfhSourceConfig(spec.mean_load_bps, topology.burst_period_ps, topology.ingress_rate_bps)
                self.mfh_sources[spec.id] = MfhSource(
                    spec.id, queue, config, make_rng(self.seed, spec.id), self.ledger, phase
                )
                self.engine.schedule_event(phase, EventKind.BURST_EMISSION, spec.id)
            if spec.frames is not None:
                # Scripted frames are queued up front and become visible at their arrival time.
                frames = [Frame(size, t, spec.id) for t, size in spec.frames]
                frames.sort(key=lambda f: f.arrival_time)
                queue.extend(
                    np.array([f.arrival_time for f in frames], dtype=np.int64),
                    np.array([f.size_bytes for f in frames], dtype=np.int64),
                )
            elif spec.kind is OnuKind.CONVENTIONAL and spec.mean_load_bps > 0:
                self.conventional_sources[spec.id] = ConventionalSource(
                    spec.id, queue, spec.mean_load_bps, make_rng(self.seed, spec.id)
                )

    def _on_burst_emission(self, event: Event) -> None:
        source = self.mfh_sources[event.entity]
        source.advance(event.time + self.topology.wsi_lead_ps)
        if isinstance(source, MfhSource):
            self.engine.schedule_event(event.time + source.config.burst_period, EventKind.BURST_EMISSION, event.entity)

    def _on_gate_arrival(self, event: Event) -> None:
        gate: GateMsg = event.payload
        onu = self.onus[gate.onu_id]
        if onu.pending_grant is not None:
            raise SimulationError(f"ONU {onu.id} received {gate} while still holding {onu.pending_grant}")
        onu.pending_grant = gate
        self.engine.schedule_event(gate.start_time, EventKind.TRANSMISSION_START, onu.id, gate)

    def _on_transmission_start(self, event: Event) -> None:
        gate: GateMsg = event.payload
        onu = self.onus[gate.onu_id]
        channel = self.channels[gate.wavelength_id]
        source = self.conventional_sources.get(onu.id)
        if source is not None:
            source.advance(gate.start_time + (gate.length_bytes + REPORT_BYTES) * channel.byte_ps)
        burst = execute_grant(onu, gate, channel)
        self.stats.record_grant(self.class_of[onu.id], burst.granted_bytes, burst.payload_bytes)
        self.engine.schedule_event(burst.report_arrival, EventKind.REPORT_ARRIVAL_AT_OLT, onu.id, burst.report)
        if len(burst.sizes):
            self.in_flight_bytes += burst.payload_bytes
            self.engine.schedule_event(burst.transmission_end, EventKind.TRANSMISSION_END, onu.id, burst)

    def _on_transmission_end(self, event: Event) -> None:
        burst: BurstResult = event.payload
        onu = self.onus[burst.onu_id]
        self.stats.record_frames(self.class_of[onu.id], burst.arrivals, burst.completions)
        payload = burst.payload_bytes
        self.delivered_bytes += payload
        self.in_flight_bytes -= payload
        if self.check:
            floor = burst.arrivals + burst.sizes * self.byte_ps + onu.prop_ps
            self.delay_bound_violations += int(np.count_nonzero(burst.completions < floor))
        if self.record_timeline:
            self.completions.extend(
                (onu.id, int(a), int(s), int(c))
                for a, s, c in zip(burst.arrivals, burst.sizes, burst.completions, strict=True)
            )

    def _on_report_arrival(self, event: Event) -> None:
        report: ReportMsg = event.payload
        self.olt.on_report(report, event.time)

    def _on_sim_end(self, event: Event) -> None:
        logger.debug("Replication %d reached %d ps", self.index, event.time)

    def run(self) -> ReplicationResult:
        """Run to the configured duration and collect the result. One shot."""
        if self._ran:
            raise SimulationError("A Simulation runs only once")
        self._ran = True
        t_end = self.duration_ps
        self.engine.schedule_event(t_end, EventKind.SIM_END)
        self.olt.bootstrap()
        self.engine.run_until(t_end)

        for source in self.conventional_sources.values():
            source.advance(t_end)
        generated = queued = drained = 0
        mfh_generated: dict[int, int] = {}
        mfh_ledger: dict[int, int] = {}
        for onu in self.onus.values():
            backlog = onu.queue.backlog_at(t_end)
            queued += backlog
            drained += onu.queue.drained_bytes
            generated += onu.queue.enqueued_bytes - onu.queue.future_bytes(t_end)
            if onu.id in self.ledger:
                mfh_generated[onu.id] = onu.queue.drained_bytes + backlog
                mfh_ledger[onu.id] = self.ledger.emitted_bytes(onu.id, -1, t_end) - self.ledger.in_transit(
                    onu.id, t_end
                )

        result = ReplicationResult(
            index=self.index,
            seed=self.seed,
            duration_ps=t_end,
            guard_ps=self.topology.guard_ps,
            stats=self.stats,
            busy_ps={c.id: c.busy_ps for c in self.channels},
            dispatched=self.engine.dispatched,
            generated_bytes=generated,
            delivered_bytes=self.delivered_bytes,
            queued_bytes=queued,
            in_flight_bytes=self.in_flight_bytes,
            drained_bytes=drained,
            mfh_generated=mfh_generated,
            mfh_ledger=mfh_ledger,
            sharing_ledger=[record for group in self.groups for record in group.history],
            pools=[(group.excess_prev, group.excess_curr) for group in self.groups],
            delay_bound_violations=self.delay_bound_violations,
            bursts={c.id: c.bursts for c in self.channels},
            grants=self.olt.grants,
            completions=self.completions,
        )
        if self.check:
            result.violations = check_invariants(result)
        if not self.record_timeline:
            result.bursts = {}
        logger.info(
            "Replication %d (seed %d) done: %d events, %d B delivered",
            self.index,
            self.seed,
            result.dispatched,
            result.delivered_bytes,
        )
        return result


def check_invariants(result: ReplicationResult) -> list[str]:
    """Every invariant the finished replication violates, as readable messages."""
    violations: list[str] = []
    for channel_id, bursts in result.bursts.items():
        ordered = sorted(bursts)
        for (start_a, end_a, onu_a), (start_b, _, onu_b) in zip(ordered, ordered[1:]):
            if end_a + result.guard_ps > start_b:
                violations.append(
                    f"channel {channel_id}: ONU {onu_b} burst at {start_b} ps overlaps ONU {onu_a} "
                    f"burst ending {end_a} ps (+{result.guard_ps} ps guard)"
                )
                break
    if result.generated_bytes != result.delivered_bytes + result.queued_bytes + result.in_flight_bytes:
        violations.append(
            f"byte conservation: generated {result.generated_bytes} B != delivered {result.delivered_bytes} B"
            f" + queued {result.queued_bytes} B + in flight {result.in_flight_bytes} B"
        )
    if result.drained_bytes != result.delivered_bytes + result.in_flight_bytes:
        violations.append(f"byte conservation: {result.drained_bytes} B left the ONUs but not all are accounted for")
    for onu_id, from_queue in result.mfh_generated.items():
        if from_queue != result.mfh_ledger.get(onu_id):
            violations.append(
                f"ONU {onu_id}: queue saw {from_queue} B of MFH traffic, WSI ledger says {result.mfh_ledger.get(onu_id)} B"
            )
    for prev, curr in result.pools:
        if prev < 0 or curr < 0:
            violations.append(f"excess pool negative: prev {prev} B, curr {curr} B")
    for record in result.sharing_ledger:
        if record.excess_prev_at_start < 0:
            violations.append(f"cycle {record.cycle_index}: negative previous excess {record.excess_prev_at_start} B")
        if record.granted_bytes > record.w_max_bytes + record.excess_prev_at_start:
            violations.append(
                f"cycle {record.cycle_index}: granted {record.granted_bytes} B > "
                f"{record.w_max_bytes} B + {record.excess_prev_at_start} B carried over"
            )
    if result.delay_bound_violations:
        violations.append(f"{result.delay_bound_violations} frames beat their transmission + propagation time")
    return violations


def scheme_config(cfg: RunConfig, scheme: str | None = None) -> SchemeConfig:
    chosen = Scheme(scheme or cfg.scheme)
    sizing = Sizing.LIMITED if chosen is Scheme.PROPOSED else Sizing(cfg.sizing)
    return SchemeConfig.for_scheme(chosen, sizing, cfg.prediction_error)


def build_replication(cfg: RunConfig, index: int, trace: TextIO | None = None) -> Simulation:
    """Replication `index` of cfg, seeded with base_seed + index."""
    return Simulation(
        build_topology(cfg),
        scheme_config(cfg),
        cfg.duration_ps,
        cfg.base_seed + index,
        index=index,
        warmup_ps=cfg.warmup_ps,
        pin_excess_pools=cfg.pin_excess_pools,
        check_invariants=cfg.check_invariants,
        trace=trace,
    )


def _pairs(items: Iterable[Iterable[int]] | None) -> tuple[tuple[SimTime, int], ...] | None:
    if items is None:
        return None
    return tuple((int(t), int(n)) for t, n in items)


def load_scripted(source: str | Path | dict[str, Any]) -> tuple[Topology, SimTime, dict[str, Any]]:
    """
    Read a scripted scenario.

    Args:
        source: Path to a JSON fixture, or the already parsed document.

    Returns:
        (topology, duration_ps, expected) where expected maps scheme names
        to hand-computed schedules, when the fixture carries them.
    """
    if isinstance(source, dict):
        document = source
    else:
        with open(source, encoding="utf-8") as f:
            document = json.load(f)
    pon = document["pon"]
    specs = tuple(
        OnuSpec(
            id=int(entry["id"]),
            customer_id=int(entry.get("customer", entry["id"])),
            distance_m=float(entry.get("distance_m", 0.0)),
            kind=OnuKind(entry["kind"]),
            guaranteed_bw_bps=int(entry["guaranteed_bw_bps"]),
            bursts=_pairs(entry.get("bursts", [])) if entry["kind"] == OnuKind.MFH.value else None,
            frames=_pairs(entry.get("frames", [])),
        )
        for entry in document["onus"]
    )
    topology = Topology(
        onus=specs,
        wavelengths=int(pon.get("wavelengths", 1)),
        line_rate_bps=int(pon.get("line_rate_bps", 25_000_000_000)),
        guard_ps=int(pon["guard_ps"]),
        t_max_ps=int(pon["t_max_ps"]),
        ingress_rate_bps=int(pon.get("ingress_rate_bps", DEFAULT_INGRESS_RATE_BPS)),
    )
    return topology, int(document["duration_ps"]), document.get("expected", {})


def run_scripted(
    source: str | Path | dict[str, Any], scheme: Scheme, trace: TextIO | None = None, epsilon: float = 0.0
) -> ReplicationResult:
    """Run a scripted scenario under one scheme with the full timeline recorded."""
    topology, duration, _ = load_scripted(source)
    sim = Simulation(
        topology,
        SchemeConfig.for_scheme(scheme, prediction_error=epsilon),
        duration,
        seed=0,
        record_timeline=True,
        trace=trace,
    )
    return sim.run()
