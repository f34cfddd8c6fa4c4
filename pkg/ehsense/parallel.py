from __future__ import annotations
from concurrent.futures import ProcessPoolExecutor
import logging
import os
from typing import Callable, Iterable, Optional, TypeVar

from tqdm import tqdm

verbose_logger = logging.getLogger('verbose')

THREADS_VARIABLE = 'EHSENSE_THREADS'

Job = TypeVar('Job')
Result = TypeVar('Result')


def worker_count(requested: Optional[int] = None) -> int:
    available = os.cpu_count() or 1
    cap = os.environ.get(THREADS_VARIABLE)
    if cap:
        try:
            available = min(available, max(1, int(cap)))
        except ValueError:
            verbose_logger.warning(f"Ignoring non-integer {THREADS_VARIABLE}={cap!r}.")
    return max(1, min(available, requested)) if requested else available


def ordered_map(
        function: Callable[[Job], Result],
        jobs: Iterable[Job],
        workers: Optional[int] = None,
        description: Optional[str] = None,
) -> list[Result]:
    """Runs independent jobs, possibly in worker processes; results come back in job order."""
    jobs = list(jobs)
    workers = worker_count(workers)
    progress = dict(total=len(jobs), desc=description, disable=description is None, leave=False)
    if workers == 1 or len(jobs) <= 1:
        return [function(job) for job in tqdm(jobs, **progress)]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as executor:
        return list(tqdm(executor.map(function, jobs), **progress))
