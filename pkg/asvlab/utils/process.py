import os
import logging
from concurrent.futures import ProcessPoolExecutor

import psutil

logger = logging.getLogger("asvlab.utils.process")

THREADS_ENV = "ASVLAB_THREADS"


def worker_count(limit=None):
    """Return the number of workers to use for parallel jobs

    The number of physical cores is used by default. The ASVLAB_THREADS
    environment variable caps it.

    Keyword arguments:
        - limit -- Never return more than this number of workers

    """
    count = psutil.cpu_count(logical=False) or os.cpu_count() or 1

    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            count = min(count, max(1, int(cap)))
        except ValueError:
            logger.warning("ignoring invalid %s value '%s'", THREADS_ENV, cap)

    if limit is not None:
        count = min(count, max(1, limit))
    return max(1, count)


def parallel_map(func, items, workers=None):
    """Apply func to each item, possibly in worker processes

    Results are returned in the order of items whatever the number of
    workers, so that callers deriving their randomness from the item
    itself stay deterministic.

    Keyword arguments:
        - func -- A picklable callable
        - items -- The arguments, one per call
        - workers -- Number of processes, defaults to worker_count()

    """
    items = list(items)
    if workers is None:
        workers = worker_count(limit=len(items))

    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    logger.debug("dispatching %d jobs over %d workers", len(items), workers)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
