"""Module with helper functions for running independent tasks in parallel"""

import concurrent.futures
import logging
from typing import Any, Callable, Iterable, Optional

logger = logging.getLogger(__name__)


def batch_map(
    func: Callable[[Any], Any], items: Iterable[Any], max_workers: Optional[int] = None
) -> list[Any]:
    """Applies func to every item in parallel and returns the results in input order.

    A ProcessPoolExecutor is used, which is the preferred method for CPU-bound
    tasks. func and the items must therefore be picklable (module level
    functions, functools.partial of those, pydantic models). With
    max_workers=1 the items are processed inline.

    Args:
        func: Function taking a single item
        items: The items to process
        max_workers: Number of worker processes, default is the number of CPUs"""

    items = list(items)

    if max_workers is not None and max_workers < 1:
        raise ValueError(f"max_workers must be at least 1, got {max_workers}")

    if max_workers == 1 or len(items) <= 1:
        return [func(item) for item in items]

    logger.debug(f"Running a batch of {len(items)} tasks (max_workers={max_workers})")

    with concurrent.futures.ProcessPoolExecutor(max_workers=max_workers) as executor:
        results = list(executor.map(func, items))

    return results
