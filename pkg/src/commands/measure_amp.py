#!/usr/bin/env python3
"""
`measure-amp`: measure one edge's amplification factor by full bypass.
"""

import argparse

from pydantic import BaseModel, Field

from src.commands.common import (
    load,
    metadata,
    output_options,
    parse_edge,
    positive_int,
    resolve_seed,
    scenario_argument,
    write_rows,
)
from src.config import settings
from src.core.reports import emit
from src.core.riskcore import measure_amplification
from src.models import ReportMetadata

COLUMNS = ("from", "to", "alpha", "bypass_duration_s")


class AmplificationMeasurement(BaseModel):
    from_id: str = Field(..., serialization_alias="from")
    to_id: str = Field(..., serialization_alias="to")
    alpha: float = Field(..., description="Bypassed over baseline mean load at the target")
    bypass_duration_s: int
    metadata: ReportMetadata


def register(subparsers) -> None:
    parser = subparsers.add_parser("measure-amp", parents=[output_options()],
                                   help="Measure amplification of one edge")
    scenario_argument(parser)
    parser.add_argument("--edge", required=True, help="Edge as 'source,target'")
    parser.add_argument("--bypass-duration", type=positive_int, default=settings.BYPASS_DURATION_S,
                        help=f"Ticks per run (default: {settings.BYPASS_DURATION_S})")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    edge = parse_edge(args.edge)
    scenario = load(args)
    seed = resolve_seed(args, scenario)
    alpha = measure_amplification(scenario.validated, scenario.traffic, edge, args.bypass_duration, seed)
    result = AmplificationMeasurement(from_id=edge[0], to_id=edge[1], alpha=alpha,
                                      bypass_duration_s=args.bypass_duration,
                                      metadata=metadata("measure-amp", scenario, seed))
    if args.fmt == "csv":
        write_rows(args, [{"from": edge[0], "to": edge[1], "alpha": alpha,
                           "bypass_duration_s": args.bypass_duration}], COLUMNS)
    else:
        emit(result.model_dump_json(indent=2, by_alias=True) + "\n", args.out)
    return 0
