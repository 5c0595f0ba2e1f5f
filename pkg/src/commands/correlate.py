#!/usr/bin/env python3
"""
`correlate`: LRI versus simulated bypass severity over seeded chains.
"""

import argparse

from src.commands.common import output_options, positive_int, resolve_seed, write_rows
from src.core.reports import emit, to_json
from src.core.validation import severity_study
from src.errors import UsageError

COLUMNS = ("index", "alpha", "declared_alpha", "lri", "severity")


def register(subparsers) -> None:
    parser = subparsers.add_parser("correlate", parents=[output_options()],
                                   help="Correlate LRI with bypass severity on generated scenarios")
    parser.add_argument("--scenarios", type=positive_int, default=30,
                        help="Generated scenarios (default: 30)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if args.scenarios < 3:
        raise UsageError("--scenarios must be at least 3")
    study = severity_study(args.scenarios, resolve_seed(args, None))
    if args.fmt == "csv":
        write_rows(args, [p.model_dump() for p in study.points], COLUMNS)
    else:
        emit(to_json(study), args.out)
    return 0
