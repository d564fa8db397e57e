"""Wall-clock measurement with exclusive access to the worker pool."""

from __future__ import annotations

import threading
import time
from typing import Callable, TypeVar

T = TypeVar("T")

_POOL_LOCK = threading.RLock()


def time_phase(phase: Callable[[], T], workers: int = 1) -> tuple[T, float, int]:
    """Run ``phase`` holding the pool lock; return (result, wall seconds, workers)."""
    with _POOL_LOCK:
        start = time.perf_counter()
        result = phase()
        wall = time.perf_counter() - start
    return result, max(0.0, wall), int(workers)
