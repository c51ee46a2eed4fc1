"""
Ordered map over a process pool
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def default_workers() -> int:
    """Available parallelism"""
    return os.cpu_count() or 1


def map_ordered(fn: Callable[[T], R], items: Iterable[T],
                workers: Optional[int] = None, desc: Optional[str] = None) -> List[R]:
    """
    Apply fn to every item, preserving input order

    Workers never share mutable state; with one worker (or one item) the
    map runs in-process so results are bit-identical either way.

    Args:
        fn: Picklable callable
        items: Inputs
        workers: Process count (None = available parallelism)
        desc: Progress-bar label; no bar when None

    Returns:
        Results in input order
    """
    items = list(items)
    if workers is None:
        workers = default_workers()
    workers = max(1, min(workers, len(items)))
    show = desc is not None and len(items) > 1

    if workers == 1:
        return [fn(item) for item in tqdm(items, desc=desc, disable=not show, leave=False)]

    logger.debug("Dispatching %d items over %d workers", len(items), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = pool.map(fn, items)
        return list(tqdm(results, total=len(items), desc=desc, disable=not show, leave=False))
