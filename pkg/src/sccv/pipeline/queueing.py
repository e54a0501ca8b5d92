"""Bounded hand-off queue and shared counters for the server pipeline.

The queue drops the OLDEST entries on overflow: for live monitoring a
fresh record beats a stale one, and the drop counter makes the loss
visible instead of silently stalling producers.
"""
from __future__ import annotations

import threading
from collections import deque
from typing import Iterable


class BoundedQueue:
    """Thread-safe FIFO with a hard capacity and drop-oldest overflow."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque = deque()
        self._lock = threading.Lock()
        self._nonempty = threading.Condition(self._lock)
        self._dropped = 0
        self._closed = False

    def put(self, item) -> int:
        """Enqueue one item; returns how many old items were evicted (0/1)."""
        with self._nonempty:
            if self._closed:
                raise RuntimeError("put on closed queue")
            dropped = 0
            if len(self._items) >= self.capacity:
                self._items.popleft()
                dropped = 1
                self._dropped += 1
            self._items.append(item)
            self._nonempty.notify()
            return dropped

    def put_many(self, items: Iterable) -> int:
        """Enqueue a batch under one lock; returns evictions."""
        items = list(items)
        with self._nonempty:
            if self._closed:
                raise RuntimeError("put on closed queue")
            dropped = 0
            for item in items:
                if len(self._items) >= self.capacity:
                    self._items.popleft()
                    dropped += 1
                self._items.append(item)
            self._dropped += dropped
            if items:
                self._nonempty.notify()
            return dropped

    def get(self, timeout: float | None = None):
        """Dequeue one item, or None on timeout / drained-and-closed."""
        with self._nonempty:
            if not self._nonempty.wait_for(
                    lambda: self._items or self._closed, timeout):
                return None
            if self._items:
                return self._items.popleft()
            return None

    def get_many(self, max_items: int, timeout: float | None = None) -> list:
        """Dequeue up to max_items at once; empty list on timeout/closed."""
        with self._nonempty:
            if not self._nonempty.wait_for(
                    lambda: self._items or self._closed, timeout):
                return []
            out = []
            while self._items and len(out) < max_items:
                out.append(self._items.popleft())
            return out

    def close(self) -> None:
        """Wake all getters; subsequent puts raise, gets drain then None."""
        with self._nonempty:
            self._closed = True
            self._nonempty.notify_all()

    @property
    def closed(self) -> bool:
        with self._lock:
            return self._closed

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)

    @property
    def dropped(self) -> int:
        with self._lock:
            return self._dropped


class Counters:
    """Named monotonic counters behind one lock."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._values: dict[str, int] = {}

    def inc(self, name: str, n: int = 1) -> None:
        with self._lock:
            self._values[name] = self._values.get(name, 0) + n

    def get(self, name: str) -> int:
        with self._lock:
            return self._values.get(name, 0)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._values)

    def render(self) -> str:
        """Plain-text exposition: one 'name value' line per counter."""
        snap = self.snapshot()
        return "".join(f"{k} {v}\n" for k, v in sorted(snap.items()))
