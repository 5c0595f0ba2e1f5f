#!/usr/bin/env python3
"""
Executor fan-out for independent blocking evaluations.
"""

import asyncio
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Coroutine, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


async def gather_in_executor(
    fn: Callable[[T], R],
    items: Sequence[T],
    max_workers: int = 4
) -> List[R]:
    """
    Run fn over items on a thread pool.

    Results come back in input order regardless of completion order.
    """
    if not items:
        return []
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        futures = [loop.run_in_executor(pool, fn, item) for item in items]
        return list(await asyncio.gather(*futures))


def run_blocking(coro: Coroutine[Any, Any, R]) -> R:
    """
    Drive a coroutine from synchronous code.

    Inside a running event loop the coroutine runs on a fresh loop in a
    worker thread.
    """
    try:
        asyncio.get_running_loop()
    except RuntimeError:
        return asyncio.run(coro)
    with ThreadPoolExecutor(max_workers=1) as pool:
        return pool.submit(asyncio.run, coro).result()
