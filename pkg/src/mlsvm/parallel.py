"""Bounded worker pool with order-preserving results.

Tasks must be pure (own RNG state, no shared mutable data) so that any worker
count produces identical output; results are merged in submission order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, workers: int = 1) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
