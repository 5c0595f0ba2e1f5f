#!/usr/bin/env python3
"""
`simulate`: run the fluid simulation and export telemetry.
"""

import argparse

from src.commands.common import (
    load,
    metadata,
    output_options,
    positive_int,
    resolve_seed,
    scenario_argument,
    write_document,
    write_rows,
)
from src.core.reports import OutputFormat, emit, telemetry_jsonl, telemetry_rows
from src.core.simengine import TELEMETRY_COLUMNS, run_simulation

FORMATS = (OutputFormat.JSON, OutputFormat.CSV, OutputFormat.JSONL)


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", parents=[output_options(FORMATS)],
                                   help="Simulate the scenario without perturbations")
    scenario_argument(parser)
    parser.add_argument("--duration", type=positive_int, default=300, help="Ticks to simulate (default: 300)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    scenario = load(args)
    seed = resolve_seed(args, scenario)
    trace = run_simulation(scenario.validated, scenario.traffic, args.duration, seed,
                           scenario_hash=scenario.content_hash())
    if args.fmt == OutputFormat.CSV.value:
        write_rows(args, telemetry_rows(trace), TELEMETRY_COLUMNS)
    elif args.fmt == OutputFormat.JSONL.value:
        emit(telemetry_jsonl(trace), args.out)
    else:
        write_document(args, {
            "metadata": metadata("simulate", scenario, seed).model_dump(mode="json"),
            "duration_s": trace.duration_s,
            "columns": list(TELEMETRY_COLUMNS),
            "telemetry": telemetry_rows(trace),
        })
    return 0
