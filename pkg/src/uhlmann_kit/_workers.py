"""Thread-pool helper whose results never depend on the worker count."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "UHLMANN_KIT_THREADS"


def worker_count(workers=None):
    if workers is None:
        workers = os.environ.get(THREADS_ENV, "1")
    try:
        workers = int(workers)
    except ValueError:
        workers = 1
    return max(1, workers)


def ordered_map(fn, items, workers=None):
    """``[fn(x) for x in items]``, optionally evaluated concurrently; order preserved."""
    items = list(items)
    workers = worker_count(workers)
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
