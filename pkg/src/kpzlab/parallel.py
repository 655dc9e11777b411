"""Replica-level worker pool with a fixed reduction order.

Replicas are embarrassingly parallel: each owns its RNG stream, results are
collected by replica index, so the thread count never changes any output.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def tmap(fn, n: int, threads: int = 1) -> list:
    """[fn(0), ..., fn(n-1)] evaluated with up to ``threads`` workers."""
    if threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))
