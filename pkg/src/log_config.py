#!/usr/bin/env python3
"""
Logging setup. Diagnostics always go to stderr.
"""

import logging
import sys

_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def get_logger(name: str) -> logging.Logger:
    """Module logger under the package namespace."""
    return logging.getLogger(name)


def configure_logging(verbosity: int = 0) -> None:
    """
    Configure the root logger.

    Args:
        verbosity: -1 quiet (errors only), 0 warnings, 1 info, 2+ debug
    """
    if verbosity < 0:
        level = logging.ERROR
    elif verbosity == 0:
        level = logging.WARNING
    elif verbosity == 1:
        level = logging.INFO
    else:
        level = logging.DEBUG

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)
