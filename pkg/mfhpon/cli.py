"""
Command-line interface for mfhpon.

Subcommands:
    run       one (scenario, scheme, b_factor) cell, all replications
    sweep     the b_factor grid against every configured scheme
    validate  check a configuration file, optionally export it resolved
    trace     one replication with the event trace written to a file

Exit codes are 0 on success, 1 for configuration errors and 2 when the
simulation aborts (invariant violation or engine assertion).
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from contextlib import ExitStack
from pathlib import Path
from typing import Any

from mfhpon import __version__
from mfhpon.config import ConfigError, RunConfig, export_to_ini, load_config
from mfhpon.engine import SimulationError
from mfhpon.harness import run_scenario, sweep, write_scenario_outputs, write_sweep_outputs
from mfhpon.log_utils import configure_logging
from mfhpon.simulation import build_replication

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_SIMULATION_ERROR = 2

FULL_SCALE = {"duration_s": 60.0, "replications": 10}


def _csv_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="INI preset or JSON sidecar to start from")
    parser.add_argument("--scheme", help="DWBA scheme (first-fit, first-fit-pred, mos-ipact, mos-ipact-pred, proposed)")
    parser.add_argument("--scenario", help="18h, 24h or custom")
    parser.add_argument("--sizing", help="fixed, limited or gated (baseline schemes only)")
    parser.add_argument("--b-factor", type=float, dest="b_factor", help="B_k as a multiple of each MFH peak load")
    parser.add_argument("--prediction-error", type=float, dest="prediction_error", help="relative WSI error epsilon")
    parser.add_argument("--duration", type=float, dest="duration_s", help="simulated seconds per replication")
    parser.add_argument("--warmup", type=float, dest="warmup_s", help="seconds excluded from delay samples")
    parser.add_argument("--replications", type=int, help="independent replications per cell")
    parser.add_argument("--seed", type=int, dest="base_seed", help="seed of replication 0")
    parser.add_argument("--workers", type=int, help="worker processes for replications")
    parser.add_argument("--output-dir", dest="output_dir", help="directory for CSV, JSON and Markdown results")
    parser.add_argument(
        "--paper-scale", "--full-scale", action="store_true", dest="full_scale", help="60 s x 10 replications"
    )
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    _add_topology(parser)


def _float_list(value: str) -> list[float]:
    return [float(item) for item in _csv_list(value)]


def _add_topology(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("PON and traffic")
    group.add_argument("--t-max-cycle", type=float, dest="t_max_cycle_us", help="maximum cycle length T_max in us")
    group.add_argument("--guard-time", type=float, dest="guard_time_us", help="guard interval between bursts in us")
    group.add_argument("--onus", type=int, dest="n_onus", help="total number of ONUs")
    group.add_argument("--mfh-onus", type=int, dest="n_mfh_onus", help="ONUs of the MFH customer")
    group.add_argument("--wavelengths", type=int, help="upstream wavelengths")
    group.add_argument("--line-rate", type=int, dest="line_rate_bps", help="upstream rate per wavelength in bit/s")
    group.add_argument("--ingress-rate", type=int, dest="ingress_rate_bps", help="DU-ONU link rate in bit/s")
    group.add_argument(
        "--mfh-distances", type=_float_list, dest="mfh_distances_m", help="comma-separated MFH ONU distances in m"
    )
    group.add_argument(
        "--conventional-load",
        type=float,
        dest="conventional_load_fraction",
        help="conventional load relative to its guaranteed bandwidth",
    )
    group.add_argument("--mfh-phase", dest="mfh_phase", help="aligned or staggered DU burst phases")
    group.add_argument("--split", dest="split_option", help="functional split whose latency budget applies")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfhpon",
        description="Upstream DWBA simulator for mobile fronthaul over a 50G TWDM-EPON.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scheme at one b_factor")
    _add_common(run)

    sw = sub.add_parser("sweep", help="run the b_factor grid against every scheme")
    _add_common(sw)
    sw.add_argument("--schemes", type=_csv_list, help="comma-separated scheme list")
    sw.add_argument("--b-grid", type=_float_list, dest="b_factor_grid")

    val = sub.add_parser("validate", help="check a configuration")
    _add_common(val)
    val.add_argument("--export", action="store_true", help="print the resolved configuration as INI")

    tr = sub.add_parser("trace", help="write the event trace of replication 0")
    _add_common(tr)
    tr.add_argument("--trace-file", dest="trace_file", help="trace output path")
    return parser


_NOT_SETTINGS = {"command", "config", "full_scale", "export"}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Preset or file, then --paper-scale, then explicit flags."""
    overrides: dict[str, Any] = dict(FULL_SCALE) if args.full_scale else {}
    for key, value in vars(args).items():
        if key not in _NOT_SETTINGS and value is not None:
            overrides[key] = value
    return load_config(args.config, overrides)


def _cmd_run(cfg: RunConfig) -> int:
    with ExitStack() as stack:
        trace = None
        if cfg.trace_file:
            trace = stack.enter_context(open(cfg.trace_file, "w", encoding="utf-8"))
        result = run_scenario(cfg, trace)
    for path in write_scenario_outputs(result):
        print(path)
    return EXIT_OK


def _cmd_sweep(cfg: RunConfig) -> int:
    cells = sweep(cfg)
    for path in write_sweep_outputs(cfg, cells):
        print(path)
    return EXIT_OK


def _cmd_validate(cfg: RunConfig, export: bool) -> int:
    if export:
        sys.stdout.write(export_to_ini(cfg))
    else:
        print(f"OK: {cfg.scenario} / {cfg.scheme} / b_factor {cfg.b_factor:.2f}")
    return EXIT_OK


def _cmd_trace(cfg: RunConfig) -> int:
    path = Path(cfg.trace_file or Path(cfg.output_dir) / "trace.txt")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as trace:
        result = build_replication(cfg, 0, trace).run()
    if result.violations:
        logger.error("Replication 0 violated %d invariants", len(result.violations))
        for violation in result.violations:
            logger.error("  %s", violation)
        return EXIT_SIMULATION_ERROR
    logger.info("Wrote %d events to %s", result.dispatched, path)
    print(path)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run the subcommand and return the exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or "INFO")
    try:
        cfg = resolve_config(args)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG_ERROR
    configure_logging(cfg.log_level, cfg.log_file)
    logger.info("mfhpon v%s: %s", __version__, args.command)

    try:
        if args.command == "run":
            return _cmd_run(cfg)
        if args.command == "sweep":
            return _cmd_sweep(cfg)
        if args.command == "validate":
            return _cmd_validate(cfg, args.export)
        return _cmd_trace(cfg)
    except SimulationError as e:
        logger.error("Simulation aborted: %s", e)
        return EXIT_SIMULATION_ERROR
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG_ERROR
