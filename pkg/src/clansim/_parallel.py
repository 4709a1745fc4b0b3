"""Replica fan-out that never lets the worker count change results."""

from __future__ import annotations

from typing import Callable, Sequence

from joblib import Parallel, delayed


def _run_chunk(fn, indices, args, kwargs):
    return [fn(i, *args, **kwargs) for i in indices]


def map_replicas(fn: Callable, n: int, *args, workers: int = 1, **kwargs) -> list:
    """Evaluate ``fn(replica, *args, **kwargs)`` for replicas ``0..n-1``.

    Results come back in replica order.  Each replica draws from its own
    substream, so splitting the index range across processes is invisible
    in the output.
    """
    n = int(n)
    workers = max(1, int(workers or 1))
    if workers == 1 or n < 2:
        return [fn(i, *args, **kwargs) for i in range(n)]
    n_chunks = min(n, workers * 4)
    bounds = [round(k * n / n_chunks) for k in range(n_chunks + 1)]
    chunks: Sequence[range] = [range(bounds[k], bounds[k + 1]) for k in range(n_chunks)]
    parts = Parallel(n_jobs=workers)(delayed(_run_chunk)(fn, c, args, kwargs) for c in chunks)
    return [r for part in parts for r in part]
