"""Engine clocks.

The ledger, contracts, and login service never call ``time.time()``
directly; they take one of these. ``SimClock`` makes whole runs
reproducible, ``WallClock`` is the default for interactive use.
"""

from __future__ import annotations

import time


class WallClock:
    """Real time. ``advance`` is a no-op; time passes on its own."""

    def now(self) -> float:
        return time.time()

    def advance(self, seconds: float) -> None:
        pass


class SimClock:
    """Simulated time: integer-friendly seconds from epoch 0, moved explicitly."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("clock can only move forward")
        self._now += seconds


Clock = WallClock | SimClock
