"""Process-pool helper for embarrassingly parallel replication work."""
from __future__ import annotations

import multiprocessing as mp
from typing import Callable, Iterable, Sequence


def pmap(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Map ``fn`` over ``items``, optionally across ``jobs`` processes.

    Results keep the input order.  ``jobs <= 1`` runs inline, which keeps
    tracebacks simple and avoids pool startup for small workloads.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    ctx = mp.get_context("fork")
    with ctx.Pool(min(jobs, len(items))) as pool:
        return pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs)))
