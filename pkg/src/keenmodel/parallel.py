"""Order-preserving parallel map over independent tasks."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def resolve_jobs(jobs: int | None) -> int:
    """``jobs`` if given, else ``KEEN_JOBS``, else the number of usable cores."""
    if jobs is None:
        env = os.environ.get("KEEN_JOBS")
        if env:
            jobs = int(env)
        else:
            try:
                jobs = len(os.sched_getaffinity(0))
            except AttributeError:
                jobs = os.cpu_count() or 1
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    return jobs


def pmap(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> list[R]:
    """Map ``fn`` over ``items``; results are returned in input order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))
