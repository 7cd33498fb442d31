"""
Replication orchestration and result artifacts.

run_scenario executes the configured number of replications of one
(scenario, scheme, b_factor) cell, pools their delay stores and writes
the CSV, the JSON sidecar and the Markdown summary. sweep repeats that
over the b_factor grid and the scheme list, isolating per-cell failures.
"""

from __future__ import annotations

import csv
import json
import logging
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TextIO

from mfhpon import __version__
from mfhpon.config import ConfigError, RunConfig, validate_config
from mfhpon.dwba import Scheme, Sizing
from mfhpon.engine import SimulationError
from mfhpon.metrics import CSV_COLUMNS, AllZero, DelayStats, SummaryRecord, jain_index, summarize
from mfhpon.simulation import InvariantViolation, ReplicationResult, build_replication
from mfhpon.splits import latency_budget_ps
from mfhpon.template_loader import render_summary

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [*CSV_COLUMNS, "status"]
STATUS_OK = "ok"


@dataclass
class ScenarioResult:
    """Pooled outcome of one cell plus what the sidecar reports about it."""

    config: RunConfig
    record: SummaryRecord
    replications: list[dict[str, Any]] = field(default_factory=list)


@dataclass
class SweepCell:
    scheme: str
    b_factor: float
    status: str
    result: ScenarioResult | None = None

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


def _run_replication(cfg: RunConfig, index: int, trace: TextIO | None = None) -> ReplicationResult:
    return build_replication(cfg, index, trace).run()


def run_replications(cfg: RunConfig, trace: TextIO | None = None) -> list[ReplicationResult]:
    """All replications of cfg in index order, on worker processes when cfg.workers > 1."""
    indices = list(range(cfg.replications))
    if cfg.workers > 1 and len(indices) > 1 and trace is None:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(indices))) as pool:
            return list(pool.map(_run_replication, [cfg] * len(indices), indices))
    return [_run_replication(cfg, index, trace) for index in indices]


def run_scenario(cfg: RunConfig, trace: TextIO | None = None) -> ScenarioResult:
    """
    Run every replication of one cell and pool the results.

    Args:
        cfg: Validated configuration; cfg.scheme and cfg.b_factor select the cell.
        trace: Optional text sink for the event trace (forces in-process execution).

    Returns:
        The pooled summary with per-replication bookkeeping.

    Raises:
        InvariantViolation: If any replication broke a post-run invariant.
    """
    logger.info(
        "Running %s / %s at b_factor %.2f: %d x %.3f s",
        cfg.scenario,
        cfg.scheme,
        cfg.b_factor,
        cfg.replications,
        cfg.duration_s,
    )
    results = run_replications(cfg, trace)
    violations = [f"replication {r.index}: {v}" for r in results for v in r.violations]
    if violations:
        raise InvariantViolation(violations)

    stats = DelayStats.pooled([r.stats for r in results])
    busy: dict[int, int] = {}
    for r in results:
        for channel_id, busy_ps in r.busy_ps.items():
            busy[channel_id] = busy.get(channel_id, 0) + busy_ps
    record = summarize(
        stats,
        busy,
        sum(r.duration_ps for r in results),
        scenario=cfg.scenario,
        scheme=cfg.scheme,
        b_factor=cfg.b_factor,
        budget_ps=latency_budget_ps(cfg.split_option),
    )
    replications = [
        {
            "index": r.index,
            "seed": r.seed,
            "events": r.dispatched,
            "generated_bytes": r.generated_bytes,
            "delivered_bytes": r.delivered_bytes,
            "queued_bytes": r.queued_bytes,
            "in_flight_bytes": r.in_flight_bytes,
        }
        for r in results
    ]
    logger.info("Finished %s at b_factor %.2f", cfg.scheme, cfg.b_factor)
    return ScenarioResult(cfg, record, replications)


def cell_config(cfg: RunConfig, scheme: str, b_factor: float) -> RunConfig:
    """cfg narrowed to one sweep cell. The proposed scheme always sizes limited."""
    sizing = Sizing.LIMITED.value if scheme == Scheme.PROPOSED.value else cfg.sizing
    return cfg.replace(scheme=scheme, b_factor=b_factor, sizing=sizing)


def sweep(cfg: RunConfig) -> list[SweepCell]:
    """
    Run the b_factor grid against every scheme in cfg.schemes.

    A failing cell is recorded with status "failed: <reason>" and the
    remaining cells still run.
    """
    cells: list[SweepCell] = []
    logger.info("Sweep: %d b_factors x %d schemes", len(cfg.b_factor_grid), len(cfg.schemes))
    for b_factor in cfg.b_factor_grid:
        for scheme in cfg.schemes:
            try:
                cell_cfg = cell_config(cfg, scheme, b_factor)
                problems = validate_config(cell_cfg)
                if problems:
                    field_name, message = problems[0]
                    raise ConfigError(f"{field_name}: {message}")
                result = run_scenario(cell_cfg)
            except (SimulationError, ConfigError, ValueError) as e:
                logger.warning("Cell %s @ %.2f failed: %s", scheme, b_factor, e)
                cells.append(SweepCell(scheme, b_factor, f"failed: {e}"))
                continue
            except Exception as e:
                logger.exception("Cell %s @ %.2f crashed", scheme, b_factor)
                cells.append(SweepCell(scheme, b_factor, f"failed: {type(e).__name__}: {e}"))
                continue
            cells.append(SweepCell(scheme, b_factor, STATUS_OK, result))
    failed = sum(1 for cell in cells if not cell.ok)
    logger.info("Sweep done: %d cells, %d failed", len(cells), failed)
    return cells


def write_csv(records: Sequence[SummaryRecord], path: Path) -> Path:
    """One row per (scenario, scheme, b_factor, class) in CSV_COLUMNS order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for record in records:
            writer.writerows(record.rows())
    logger.debug("Wrote %s", path)
    return path


def write_sweep_csv(cells: Sequence[SweepCell], scenario: str, path: Path) -> Path:
    """Combined sweep CSV; a failed cell is one row carrying only its status."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for cell in cells:
            if cell.result is None:
                row = dict.fromkeys(SWEEP_COLUMNS, "")
                row.update(scenario=scenario, scheme=cell.scheme, b_factor=f"{cell.b_factor:.2f}", status=cell.status)
                writer.writerow(row)
                continue
            for row in cell.result.record.rows():
                writer.writerow({**row, "status": cell.status})
    logger.debug("Wrote %s", path)
    return path


def _offered_load_fairness(cfg: RunConfig) -> float | None:
    try:
        return jain_index(cfg.mfh_peak_bps)
    except (AllZero, ValueError):
        return None


def sidecar_document(cfg: RunConfig, results: Sequence[ScenarioResult], failures: Sequence[SweepCell] = ()) -> dict:
    """Resolved config plus per-cell utilization and invariant report."""
    return {
        "version": __version__,
        "config": cfg.to_dict(),
        "mfh_peak_load_fairness": _offered_load_fairness(cfg),
        "cells": [
            {
                "scheme": r.record.scheme,
                "b_factor": r.record.b_factor,
                "utilization": {str(k): v for k, v in r.record.utilization.items()},
                "invariants_checked": r.config.check_invariants,
                "replications": r.replications,
            }
            for r in results
        ],
        "failures": [{"scheme": c.scheme, "b_factor": c.b_factor, "status": c.status} for c in failures],
    }


def write_sidecar(document: dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug("Wrote %s", path)
    return path


def write_summary(markdown: str, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(markdown, encoding="utf-8")
    logger.debug("Wrote %s", path)
    return path


def output_stem(cfg: RunConfig) -> str:
    return f"{cfg.scenario}-{cfg.scheme}-b{cfg.b_factor:.2f}"


def write_scenario_outputs(result: ScenarioResult, output_dir: Path | None = None) -> list[Path]:
    """CSV, JSON sidecar and Markdown summary of one run_scenario result."""
    cfg = result.config
    out = Path(output_dir or cfg.output_dir)
    stem = output_stem(cfg)
    markdown = render_summary(
        [result.record],
        title=f"mfhpon run {stem}",
        split=cfg.split_option,
        replications=cfg.replications,
        duration_s=cfg.duration_s,
    )
    return [
        write_csv([result.record], out / f"{stem}.csv"),
        write_sidecar(sidecar_document(cfg, [result]), out / f"{stem}.json"),
        write_summary(markdown, out / f"{stem}.md"),
    ]


def write_sweep_outputs(cfg: RunConfig, cells: Sequence[SweepCell], output_dir: Path | None = None) -> list[Path]:
    """Combined CSV, JSON sidecar and Markdown summary of a sweep."""
    out = Path(output_dir or cfg.output_dir)
    stem = f"sweep-{cfg.scenario}"
    done = [cell.result for cell in cells if cell.result is not None]
    failed = [cell for cell in cells if cell.result is None]
    markdown = render_summary(
        [r.record for r in done],
        title=f"mfhpon sweep ({cfg.scenario})",
        split=cfg.split_option,
        replications=cfg.replications,
        duration_s=cfg.duration_s,
        failures=[(c.scheme, c.b_factor, c.status) for c in failed],
    )
    return [
        write_sweep_csv(cells, cfg.scenario, out / f"{stem}.csv"),
        write_sidecar(sidecar_document(cfg, done, failed), out / f"{stem}.json"),
        write_summary(markdown, out / f"{stem}.md"),
    ]
