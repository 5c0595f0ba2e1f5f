#!/usr/bin/env python3
"""
Shared fixtures.
"""

from pathlib import Path

import pytest

from src.core.simengine import TrafficProfile

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def scenarios_dir():
    """Directory holding the bundled scenario files."""
    return SCENARIOS


@pytest.fixture
def traffic():
    """Constant 1000 rps at the entries."""
    return TrafficProfile(base_rps=1000.0)
