#!/usr/bin/env python3
"""
`assess`: rank every component by LRI.
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
from src.config import settings
from src.core.reports import RISK_COLUMNS, emit, risk_rows, to_json
from src.core.riskcore import (
    assess_system_risk,
    build_failure_catalog,
    failure_blind_spots,
    resolve_amplification,
)
from src.log_config import get_logger

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("assess", parents=[output_options()],
                                   help="System-wide latent risk assessment")
    scenario_argument(parser)
    parser.add_argument("--measure", action="store_true",
                        help="Measure amplification on every bypassable edge, overriding declared values")
    parser.add_argument("--bypass-duration", type=positive_int, default=settings.BYPASS_DURATION_S,
                        help=f"Ticks per bypass measurement (default: {settings.BYPASS_DURATION_S})")
    parser.add_argument("--trials", type=positive_int, default=None,
                        help="Detection trials per failure mode (default: the scenario's)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    scenario = load(args)
    seed = resolve_seed(args, scenario)
    topo = scenario.validated

    amap = resolve_amplification(topo, scenario.traffic, args.bypass_duration, seed, measure_all=args.measure)

    catalog = None
    blind_spots = []
    detection = scenario.detection
    if detection is not None and detection.failure_modes:
        trials = args.trials or detection.trials
        catalog = build_failure_catalog(topo, scenario.traffic, detection.failure_modes,
                                        detection.rules, trials, seed)
        blind_spots = failure_blind_spots(topo, scenario.traffic, detection.failure_modes,
                                          detection.rules, seed)

    report = assess_system_risk(topo, amap, catalog)
    report.blind_spots = blind_spots
    report.metadata = metadata("assess", scenario, seed)
    top = report.components[0]
    logger.info("riskiest component: %s (LRI %.4g, %s)", top.component, top.lri, top.level.value)

    if args.fmt == "csv":
        write_rows(args, risk_rows(report), RISK_COLUMNS)
    else:
        emit(to_json(report), args.out)
    return 0
