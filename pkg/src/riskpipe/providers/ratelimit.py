"""Client-side throttling shared by all provider implementations."""

from __future__ import annotations

import threading
import time
from typing import Callable


class TokenBucket:
    """Token-bucket limiter: at most `rate` acquisitions per `window_seconds`.

    Tokens refill continuously at rate/window per second up to a capacity
    of `rate`. acquire() blocks the calling thread until a token is
    available. Clock and sleep are injectable so tests never wall-wait.
    """

    def __init__(
        self,
        rate: int,
        window_seconds: float = 1.0,
        *,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate < 1:
            raise ValueError("rate must be >= 1")
        if window_seconds <= 0:
            raise ValueError("window_seconds must be positive")
        self._rate = rate
        self._per_second = rate / window_seconds
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._tokens = float(rate)
        self._last = clock()

    def _refill_locked(self) -> None:
        now = self._clock()
        self._tokens = min(
            float(self._rate), self._tokens + (now - self._last) * self._per_second
        )
        self._last = now

    def acquire(self) -> None:
        while True:
            with self._lock:
                self._refill_locked()
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._per_second
            self._sleep(wait)


class ConcurrencyGate:
    """Bounded-concurrency context manager that tracks peak in-flight count.

    The peak counter exists so tests (and the run manifest) can verify the
    in-flight invariant rather than trust it.
    """

    def __init__(self, limit: int):
        if limit < 1:
            raise ValueError("limit must be >= 1")
        self.limit = limit
        self._sem = threading.BoundedSemaphore(limit)
        self._lock = threading.Lock()
        self._in_flight = 0
        self.peak_in_flight = 0

    def __enter__(self) -> "ConcurrencyGate":
        self._sem.acquire()
        with self._lock:
            self._in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
        return self

    def __exit__(self, *exc_info: object) -> None:
        with self._lock:
            self._in_flight -= 1
        self._sem.release()
