#!/usr/bin/env python3
"""
Helpers shared by the subcommands.
"""

import argparse
import json
from typing import Any, Dict, Iterable, Optional, Sequence

from src.core.reports import OutputFormat, emit, to_csv
from src.core.scenario import Scenario, load_scenario
from src.errors import UsageError
from src.models import ReportMetadata


def output_options(formats: Sequence[OutputFormat] = (OutputFormat.JSON, OutputFormat.CSV),
                   default: OutputFormat = OutputFormat.JSON) -> argparse.ArgumentParser:
    """Parent parser with --seed, --format and --out."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--seed", type=int, default=None,
                        help="Master seed (defaults to the scenario's seed)")
    parent.add_argument("--format", dest="fmt", choices=[f.value for f in formats], default=default.value,
                        help=f"Output format (default: {default.value})")
    parent.add_argument("--out", default=None, help="Output file (default: standard output)")
    return parent


def scenario_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("scenario", help="Scenario JSON file")


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def load(args: argparse.Namespace) -> Scenario:
    return load_scenario(args.scenario)


def resolve_seed(args: argparse.Namespace, scenario: Optional[Scenario], *fallbacks: Optional[int]) -> int:
    """--seed first, then fallbacks in order, then the scenario seed."""
    if args.seed is not None:
        return args.seed
    for value in fallbacks:
        if value is not None:
            return value
    return scenario.seed if scenario is not None else 0


def metadata(command: str, scenario: Optional[Scenario], seed: int) -> ReportMetadata:
    return ReportMetadata(command=command, scenario_hash=scenario.content_hash() if scenario else "", seed=seed)


def write_document(args: argparse.Namespace, document: Dict[str, Any]) -> None:
    emit(json.dumps(document, indent=2) + "\n", args.out)


def write_rows(args: argparse.Namespace, rows: Iterable[Dict[str, Any]], columns: Sequence[str]) -> None:
    emit(to_csv(rows, columns), args.out)


def parse_edge(text: str) -> tuple:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts):
        raise UsageError(f"--edge expects 'source,target', got {text!r}")
    return parts[0], parts[1]
