"""Deterministic chunked map used by the per-sample reductions.

Chunk boundaries depend only on the problem size, never on the thread
count, so results are bit-identical for any value of ``HS_THREADS``.
"""

import os
from concurrent.futures import ThreadPoolExecutor

# upper bound on elements of the (queries x samples x d) difference tensor per chunk
_CHUNK_ELEMENTS = 1 << 21


def thread_count():
    raw = os.environ.get("HS_THREADS", "1").strip()
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)


def chunk_slices(n_queries, n_samples, d):
    per_query = max(1, n_samples * d)
    size = max(1, _CHUNK_ELEMENTS // per_query)
    return [slice(start, min(start + size, n_queries)) for start in range(0, n_queries, size)]


def ordered_map(func, items):
    """Apply ``func`` to ``items`` and return results in input order."""
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
