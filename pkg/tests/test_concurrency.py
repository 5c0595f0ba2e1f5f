#!/usr/bin/env python3
"""
Unit tests for concurrency.py
"""

import asyncio
import threading

from src.core.concurrency import gather_in_executor, run_blocking


async def _square_all(items):
    return await gather_in_executor(lambda x: x * x, items, max_workers=3)


class TestGatherInExecutor:
    """Test suite for gather_in_executor."""

    async def test_keeps_input_order(self):
        """Test results follow input order."""
        assert await _square_all(list(range(20))) == [x * x for x in range(20)]

    async def test_empty(self):
        """Test no items yields no results."""
        assert await _square_all([]) == []


class TestRunBlocking:
    """Test suite for run_blocking."""

    def test_without_running_loop(self):
        """Test a plain synchronous caller drives the coroutine on its own thread."""
        async def caller_thread():
            return threading.get_ident()

        assert run_blocking(caller_thread()) == threading.get_ident()
        assert run_blocking(_square_all([1, 2, 3])) == [1, 4, 9]

    async def test_inside_running_loop(self):
        """Test a sync call made from inside an event loop still completes."""
        outer = asyncio.get_running_loop()

        async def inner_loop():
            return asyncio.get_running_loop()

        assert run_blocking(_square_all([4, 5])) == [16, 25]
        assert run_blocking(inner_loop()) is not outer
