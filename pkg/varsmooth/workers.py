"""Bounded worker pool used for independent per-item computations."""

from __future__ import annotations

import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

THREADS_ENV = "VARSMOOTH_THREADS"

T = TypeVar("T")
R = TypeVar("R")

_EXECUTOR: Optional[ThreadPoolExecutor] = None
_EXECUTOR_SIZE = 0
_EXECUTOR_LOCK = threading.Lock()
_requested_threads: Optional[int] = None


def set_thread_count(threads: Optional[int]) -> None:
    """Override the pool size; ``None`` returns to the environment default."""

    global _requested_threads, _EXECUTOR, _EXECUTOR_SIZE
    with _EXECUTOR_LOCK:
        _requested_threads = threads
        if _EXECUTOR is not None:
            _EXECUTOR.shutdown(wait=True)
            _EXECUTOR = None
            _EXECUTOR_SIZE = 0


def thread_count() -> int:
    if _requested_threads is not None:
        return max(1, int(_requested_threads))
    raw = os.getenv(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r", THREADS_ENV, raw)
        return 1


def _get_executor() -> ThreadPoolExecutor:
    """Return a lazily initialised thread pool sized by :func:`thread_count`."""

    global _EXECUTOR, _EXECUTOR_SIZE
    size = thread_count()
    with _EXECUTOR_LOCK:
        if _EXECUTOR is None or _EXECUTOR_SIZE != size:
            if _EXECUTOR is not None:
                _EXECUTOR.shutdown(wait=True)
            _EXECUTOR = ThreadPoolExecutor(max_workers=size, thread_name_prefix="varsmooth")
            _EXECUTOR_SIZE = size
    return _EXECUTOR


def parallel_map(func: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Apply ``func`` to every item; results keep the input order."""

    materialised: Sequence[T] = list(items)
    if thread_count() == 1 or len(materialised) < 2:
        return [func(item) for item in materialised]
    return list(_get_executor().map(func, materialised))


def spawn_generators(seed: int, count: int) -> List[np.random.Generator]:
    """One independent generator per work item, fixed by ``seed`` alone."""

    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]
