"""Clocks returning integer milliseconds."""

from __future__ import annotations

import time


def wall_clock_ms() -> int:
    return time.time_ns() // 1_000_000


class SimClock:
    """Logical clock for accelerated simulations; only moves when told to."""

    def __init__(self, start_ms: int = 0):
        self.now_ms = start_ms

    def __call__(self) -> int:
        return self.now_ms

    def set(self, ms: int) -> None:
        if ms < self.now_ms:
            raise ValueError("simulated clock cannot run backwards")
        self.now_ms = ms

    def advance(self, ms: int) -> None:
        self.set(self.now_ms + ms)
