"""Bounded per-agent event memory."""

from __future__ import annotations

from collections import deque
from typing import NamedTuple

__all__ = ["MemoryDigest", "AgentMemory"]


class MemoryDigest(NamedTuple):
    day: int
    state: int
    nbr_fraction: float
    realized: bool


class AgentMemory:
    """Ring buffer of the last ``k`` daily digests of one agent."""

    __slots__ = ("k", "_buf", "_last_day")

    def __init__(self, k: int = 7):
        if k < 1:
            raise ValueError("memory length must be >= 1")
        self.k = int(k)
        self._buf = deque(maxlen=self.k)
        self._last_day = None

    def append(self, day: int, state: int, nbr_fraction: float, realized: bool):
        if self._last_day is not None and day <= self._last_day:
            raise ValueError(f"memory is append-only in time (day {day} after {self._last_day})")
        self._buf.append(MemoryDigest(int(day), int(state), float(nbr_fraction), bool(realized)))
        self._last_day = int(day)

    def __len__(self) -> int:
        return len(self._buf)

    def __iter__(self):
        return iter(self._buf)

    def digests(self) -> list[MemoryDigest]:
        return list(self._buf)

    def stay_streak(self, state: int) -> int:
        """Consecutive most recent days spent in ``state`` without a realised transition."""
        n = 0
        for d in reversed(self._buf):
            if d.state != state or d.realized:
                break
            n += 1
        return n
