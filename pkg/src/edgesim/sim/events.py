from __future__ import annotations

import heapq
from typing import Any, Callable

Callback = Callable[[float, Any], None]


class EventQueue:
    """Time-ordered callbacks; equal times pop in insertion order."""

    __slots__ = ("_heap", "_seq")

    def __init__(self):
        self._heap: list[tuple[float, int, Callback, Any]] = []
        self._seq = 0

    def push(self, t: float, fn: Callback, arg: Any = None) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, fn, arg))

    def pop(self) -> tuple[float, Callback, Any]:
        t, _, fn, arg = heapq.heappop(self._heap)
        return t, fn, arg

    def peek_time(self) -> float:
        return self._heap[0][0]

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)
