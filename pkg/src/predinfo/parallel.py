"""Bounded worker pool with results returned in submission order."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable


def resolve_jobs(jobs: int | None) -> int:
    """Explicit value, else the PREDINFO_JOBS environment variable, else 1."""
    if jobs is None:
        env = os.environ.get("PREDINFO_JOBS", "").strip()
        jobs = int(env) if env else 1
    return max(1, int(jobs))


def run_ordered(fn: Callable, tasks: Iterable, jobs: int | None = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally spread over processes; order is always preserved.

    Each task must carry everything it needs (including its seed), so the result does not
    depend on which worker ran it.
    """
    tasks = list(tasks)
    n = resolve_jobs(jobs)
    if n == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(n, len(tasks))) as pool:
        return list(pool.map(fn, tasks))
