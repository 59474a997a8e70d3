from __future__ import annotations

import threading
import time
from collections import defaultdict
from contextlib import contextmanager


class StageTimer:
    """Wall-clock time and recurrence-step counters per stage.

    Counters are added from worker threads, so updates are locked; the
    totals are read once the stage has finished.
    """

    STAGES = ("precompute", "recurrence", "exchange", "fft")

    def __init__(self):
        self.seconds: dict[str, float] = defaultdict(float)
        self.executed_steps = 0
        self.recurrence_steps = 0
        self.thread_steps: dict[tuple[int, int], int] = defaultdict(int)
        self.exchange_bytes = 0
        self._lock = threading.Lock()

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            dt = time.perf_counter() - t0
            with self._lock:
                self.seconds[name] += dt

    def add_steps(self, executed: int, logical: int, worker: int = 0, thread: int = 0):
        with self._lock:
            self.executed_steps += executed
            self.recurrence_steps += logical
            self.thread_steps[(worker, thread)] += logical

    def add_bytes(self, n: int):
        with self._lock:
            self.exchange_bytes += n


class _NullTimer:
    @contextmanager
    def stage(self, name):
        yield

    def add_steps(self, executed, logical, worker=0, thread=0):
        pass

    def add_bytes(self, n):
        pass


NULL_TIMER = _NullTimer()
