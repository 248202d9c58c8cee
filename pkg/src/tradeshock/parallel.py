"""Thread-count setting shared by every stage, and an order-preserving parallel map.

Work items never share mutable state and results are merged in input order,
so outputs do not depend on the thread count.
"""

import os
from concurrent.futures import ThreadPoolExecutor

_threads = os.cpu_count() or 1


def set_threads(n: int) -> None:
    global _threads
    if n < 1:
        raise ValueError("thread count must be positive")
    _threads = int(n)


def get_threads() -> int:
    return _threads


def pmap(fn, items, threads=None):
    """``[fn(x) for x in items]``, evaluated on up to ``threads`` threads."""
    items = list(items)
    n = get_threads() if threads is None else threads
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
