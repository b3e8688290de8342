"""Shared runtime helpers: worker-count control and array chunking."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence


def worker_count() -> int:
    """Number of parallel workers; capped by the CAPAX_THREADS env var."""
    env = os.environ.get("CAPAX_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))


def chunked(n: int, size: int) -> list[slice]:
    """Disjoint slices covering range(n) in order."""
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def run_blocks(fn: Callable[[slice], None], blocks: Sequence[slice]) -> None:
    """Run fn over blocks, in parallel when more than one worker is allowed.

    fn must write only to disjoint outputs per block so results stay
    deterministic regardless of scheduling.
    """
    workers = worker_count()
    if workers == 1 or len(blocks) <= 1:
        for b in blocks:
            fn(b)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(fn, blocks))
