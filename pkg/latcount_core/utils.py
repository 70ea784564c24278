import time
from concurrent.futures import ThreadPoolExecutor
from functools import wraps
from typing import Any, Callable, Iterable, List, Optional

import numpy as np
from tqdm import tqdm


def measure_time(logger, precision=6, prefix=""):
    """
    Decorator factory that logs the wall time of the wrapped call.
    Usage: @measure_time(logger, precision=3, prefix="Estimating: ")
    """

    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            result = func(*args, **kwargs)
            end = time.perf_counter()
            logger.info(
                "%s%s took %.*f seconds", prefix, func.__name__, precision, end - start
            )
            return result

        return wrapper

    return decorator


def ordered_map(
    func: Callable[[Any], Any],
    items: Iterable[Any],
    max_workers: int = 1,
    desc: Optional[str] = None,
    progress: bool = False,
) -> List[Any]:
    """
    Apply a function to every item, in parallel using threads, with an optional
    progress bar. Results come back in input order whatever the completion order.

    Args:
        func: Function called as func(item).
        items: Work items.
        max_workers: Number of worker threads; 1 runs inline.
        desc: Progress bar label.
        progress: Show a tqdm progress bar.
    """
    items = list(items)
    if max_workers <= 1 or len(items) <= 1:
        iterator = tqdm(items, desc=desc, disable=not progress)
        return [func(item) for item in iterator]

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [executor.submit(func, item) for item in items]
        for _ in tqdm(futures, total=len(items), desc=desc, disable=not progress):
            pass
        return [future.result() for future in futures]


def derive_seed(master_seed: int, *keys: int) -> np.random.SeedSequence:
    """
    Per-stream seed derived from the master seed and integer keys.

    The same (master_seed, keys) always yields the same stream, so outputs do
    not depend on scheduling.
    """
    return np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys)
    )


def make_rng(master_seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *keys))

