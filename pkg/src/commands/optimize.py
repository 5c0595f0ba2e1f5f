#!/usr/bin/env python3
"""
`optimize`: risk-constrained NSGA-II over the scenario's decision variables.
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
from src.core.apex import optimize
from src.core.reports import emit, front_columns, front_rows, to_json
from src.errors import SchemaError


def register(subparsers) -> None:
    parser = subparsers.add_parser("optimize", parents=[output_options()],
                                   help="Compute the risk-constrained Pareto front")
    scenario_argument(parser)
    parser.add_argument("--generations", type=positive_int, default=None,
                        help="Override the scenario's generation count")
    parser.add_argument("--population", type=positive_int, default=None,
                        help="Override the scenario's population size")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    scenario = load(args)
    if scenario.optimizer is None:
        raise SchemaError("optimizer", "section is required for optimize")
    seed = resolve_seed(args, scenario, scenario.optimizer.seed)

    updates = {"seed": seed}
    if args.generations is not None:
        updates["generations"] = args.generations
    if args.population is not None:
        updates["population"] = args.population
    # revalidate so overrides obey the same bounds as the scenario
    cfg = type(scenario.optimizer).model_validate({**scenario.optimizer.model_dump(), **updates})

    front = optimize(scenario.validated, scenario.traffic, cfg.bounds, cfg)
    front.metadata = metadata("optimize", scenario, seed)
    if args.fmt == "csv":
        write_rows(args, front_rows(front), front_columns(front))
    else:
        emit(to_json(front), args.out)
    return 0
