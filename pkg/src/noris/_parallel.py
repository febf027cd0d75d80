"""Chunked thread parallelism controlled by ``NORIS_THREADS``.

Work is split into contiguous index chunks and the per-element results are
concatenated in chunk order, so output never depends on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

# below this many elements a thread pool costs more than it saves
MIN_PARALLEL = 65536


def worker_count() -> int:
    raw = os.environ.get("NORIS_THREADS", "").strip()
    try:
        n = int(raw) if raw else 0
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)


def map_chunks(fn, items: np.ndarray, min_parallel: int = MIN_PARALLEL) -> np.ndarray:
    """Apply ``fn`` to contiguous slices of ``items`` and concatenate results."""
    workers = worker_count()
    if workers == 1 or len(items) < min_parallel:
        return fn(items)
    chunks = np.array_split(items, workers)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(fn, chunks))
    return np.concatenate(parts)
