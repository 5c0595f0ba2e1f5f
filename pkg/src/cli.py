#!/usr/bin/env python3
"""
Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 scenario error, 3 runtime error.
Diagnostics go to stderr; reports go to --out or stdout.
"""

import argparse
import sys
from typing import List, NoReturn, Optional

from src.commands import assess, campaign, correlate, measure_amp, monitor, optimize, simulate, validate
from src.config import settings
from src.errors import LatentRiskError, UsageError
from src.log_config import configure_logging, get_logger

logger = get_logger(__name__)

COMMANDS = (validate, simulate, assess, measure_amp, campaign, optimize, monitor, correlate)


class _ArgumentParser(argparse.ArgumentParser):
    """Raises UsageError instead of exiting, so main() owns the exit code."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="latent-risk",
        description="Simulate, perturb, assess and optimize optimization-induced latent risk.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging (repeatable)")
    parser.add_argument("-q", "--quiet", action="store_true", help="Errors only")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else 0

    configure_logging(-1 if args.quiet else args.verbose)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: a command is required", file=sys.stderr)
        return UsageError.exit_code

    try:
        return args.handler(args)
    except LatentRiskError as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
