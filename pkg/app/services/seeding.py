from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np

from app.database.settings import settings

T = TypeVar("T")
R = TypeVar("R")


def derive_seed(root: int, *index: int) -> int:
    """Child seed for task `index` under `root`; independent of scheduling."""
    entropy = [int(root)] + [int(i) for i in index]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint32)[0])


def make_rng(root: int, *index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *index))


def parallel_map(fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None) -> List[R]:
    """Map in a thread pool, results in input order"""
    workers = settings.workers if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
