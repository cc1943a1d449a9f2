"""Worker pool shared by sweeps and simulation trials."""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from . import config

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], max_workers: Optional[int] = None) -> List[R]:
    """Map `fn` over `items` on at most SPHERECOVER_THREADS threads, keeping input order."""
    items = list(items)
    workers = min(max_workers or config.THREADS, config.THREADS, max(1, len(items)))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
