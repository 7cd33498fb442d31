"""
RAN functional split options.

Layer boundary, one-way fronthaul latency budget and indicative uplink
bitrates for the 3GPP TR 38.801 split options. The split chosen for a run
only decides the MFH delay budget that results are checked against.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from mfhpon.engine import SimTime, us_to_ps

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitOption:
    name: str
    boundary: str
    latency_budget_us: float
    constant_rate: bool
    uplink_mbps: tuple[float, float] | None

    @property
    def latency_budget_ps(self) -> SimTime:
        return us_to_ps(self.latency_budget_us)


# Budgets are the tightest value of each published range.
SPLIT_OPTIONS: dict[str, SplitOption] = {
    s.name: s
    for s in (
        SplitOption("1", "RRC-PDCP", 10_000, False, (3_000, 3_000)),
        SplitOption("2", "PDCP-RLC", 1_500, False, (3_024, 3_024)),
        SplitOption("3", "intra-RLC", 1_500, False, None),
        SplitOption("4", "RLC-MAC", 100, False, (3_000, 3_000)),
        SplitOption("5", "intra-MAC", 250, False, (3_000, 3_000)),
        SplitOption("6", "MAC-PHY", 250, False, (5_640, 5_640)),
        SplitOption("7-1", "intra-PHY (FFT at DU)", 250, True, (16_600, 21_600)),
        SplitOption("7-2", "intra-PHY (precoding at DU)", 250, True, (53_800, 86_100)),
        SplitOption("7-3", "intra-PHY (encoder at CU)", 250, False, (53_800, 86_100)),
        SplitOption("8", "PHY-RF", 250, True, (157_300, 157_300)),
    )
}


def split_option(name: str) -> SplitOption:
    """Look up a split option by name ("6", "7-2", ...).

    Raises:
        KeyError: Naming the valid options.
    """
    try:
        return SPLIT_OPTIONS[name]
    except KeyError:
        raise KeyError(f"Unknown split option {name!r}; valid options: {', '.join(SPLIT_OPTIONS)}") from None


def latency_budget_ps(name: str) -> SimTime:
    return split_option(name).latency_budget_ps
