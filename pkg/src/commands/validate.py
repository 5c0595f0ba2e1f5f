#!/usr/bin/env python3
"""
`validate`: parse a scenario and report its topology.
"""

import argparse

from src.commands.common import load, output_options, scenario_argument, write_document, write_rows
from src.core.topology import dependency_depth
from src.log_config import get_logger

logger = get_logger(__name__)

COLUMNS = ("order", "component", "kind", "depth", "entry")


def register(subparsers) -> None:
    parser = subparsers.add_parser("validate", parents=[output_options()],
                                   help="Validate a scenario file")
    scenario_argument(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    scenario = load(args)
    topo = scenario.validated
    rows = [
        {
            "order": index,
            "component": cid,
            "kind": topo.component(cid).kind.value,
            "depth": dependency_depth(topo, cid),
            "entry": topo.is_entry(cid),
        }
        for index, cid in enumerate(topo.order)
    ]
    if args.fmt == "csv":
        write_rows(args, rows, COLUMNS)
    else:
        write_document(args, {
            "valid": True,
            "name": scenario.name,
            "scenario_hash": scenario.content_hash(),
            "entries": list(topo.entry_ids),
            "edges": len(topo.edges),
            "components": rows,
        })
    logger.info("scenario is valid: %d component(s)", len(rows))
    return 0
