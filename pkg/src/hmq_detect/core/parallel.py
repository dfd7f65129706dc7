"""
Deterministic replicate parallelism.

Every replicate receives its own SeedSequence child spawned from the master
seed, so results are identical for any worker count.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence, TypeVar, Union

import numpy as np

from .errors import ArgumentError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

Seed = Union[int, np.random.SeedSequence]


def spawn_seeds(seed: Seed, count: int) -> List[np.random.SeedSequence]:
    """``count`` independent child seed sequences of ``seed``."""
    if count < 1:
        raise ArgumentError(f"need at least one replicate, got {count}")
    parent = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return parent.spawn(count)


def run_replicates(fn: Callable[[T], R], tasks: Sequence[T], workers: int = 1) -> List[R]:
    """Apply ``fn`` to every task, in order, on up to ``workers`` processes.

    ``fn`` must be picklable when ``workers > 1`` (module-level function or
    functools.partial of one).
    """
    if workers < 1:
        raise ArgumentError(f"workers must be >= 1, got {workers}")
    if workers == 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    processes = min(workers, len(tasks))
    logger.debug(f"Running {len(tasks)} replicates on {processes} processes")
    with ProcessPoolExecutor(max_workers=processes) as pool:
        return list(pool.map(fn, tasks))
