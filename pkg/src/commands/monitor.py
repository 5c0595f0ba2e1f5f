#!/usr/bin/env python3
"""
`monitor`: stream the scenario through the continuous optimization loop.
"""

import argparse

from src.commands.common import (
    load,
    metadata,
    output_options,
    positive_int,
    resolve_seed,
    scenario_argument,
    write_rows,
)
from src.core.raven import MonitorPolicy, continuous_loop
from src.core.reports import LOG_COLUMNS, OutputFormat, emit, log_jsonl, log_rows, to_json

FORMATS = (OutputFormat.JSONL, OutputFormat.JSON, OutputFormat.CSV)


def register(subparsers) -> None:
    parser = subparsers.add_parser("monitor", parents=[output_options(FORMATS, OutputFormat.JSONL)],
                                   help="Run the continuous risk-aware optimization loop")
    scenario_argument(parser)
    parser.add_argument("--duration", type=positive_int, default=3600,
                        help="Ticks to stream (default: 3600)")
    parser.add_argument("--disable-loop", action="store_true",
                        help="Observe only; no reconfiguration or mitigation")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    scenario = load(args)
    seed = resolve_seed(args, scenario)
    policy = scenario.monitor or MonitorPolicy()
    if args.disable_loop:
        policy = policy.model_copy(update={"enabled": False})

    log = continuous_loop(scenario.validated, scenario.traffic, policy, scenario.optimizer, args.duration, seed)
    log.metadata = metadata("monitor", scenario, seed)
    if args.fmt == OutputFormat.CSV.value:
        write_rows(args, log_rows(log), LOG_COLUMNS)
    elif args.fmt == OutputFormat.JSON.value:
        emit(to_json(log), args.out)
    else:
        emit(log_jsonl(log), args.out)
    return 0
