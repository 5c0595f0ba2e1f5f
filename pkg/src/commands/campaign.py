#!/usr/bin/env python3
"""
`campaign`: plan and run a perturbation campaign.
"""

import argparse

from src.commands.common import (
    load,
    metadata,
    output_options,
    resolve_seed,
    scenario_argument,
    write_rows,
)
from src.core.hydra import CampaignConfig, plan_campaign, run_campaign
from src.core.reports import CAMPAIGN_COLUMNS, campaign_rows, emit, to_json
from src.log_config import get_logger

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("campaign", parents=[output_options()],
                                   help="Run a Thompson-sampling perturbation campaign")
    scenario_argument(parser)
    parser.add_argument("--budget", type=int, default=None,
                        help="Perturbed-tick budget (default: the scenario's campaign budget)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    scenario = load(args)
    config = scenario.campaign or CampaignConfig()
    seed = resolve_seed(args, scenario, config.seed)
    budget = config.budget if args.budget is None else args.budget
    topo = scenario.validated

    plan = plan_campaign(topo, config.prior_stats, budget, seed, config)
    report = run_campaign(topo, scenario.traffic, plan, stats=config.prior_stats)
    report.metadata = metadata("campaign", scenario, seed)
    logger.info("%d of %d step(s) revealed a worse classification",
                sum(1 for s in report.steps if s.success), len(report.steps))

    if args.fmt == "csv":
        write_rows(args, campaign_rows(report), CAMPAIGN_COLUMNS)
    else:
        emit(to_json(report), args.out)
    return 0
