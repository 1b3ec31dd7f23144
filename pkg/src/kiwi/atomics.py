"""Single-word atomic primitives and memory fences.

CPython guarantees torn-free reads/writes of object attributes and list
cells, so plain reads are safe; read-modify-write operations (CAS,
fetch-and-add) are arbitrated with a per-word lock. On a machine-level
runtime these would be single instructions; the contracts are the same.
"""

from __future__ import annotations

import threading
from typing import Any, Callable, Generic, TypeVar

T = TypeVar("T")


class AtomicInt:
    """Integer word edited only by CAS / fetch-and-add; plain reads."""

    __slots__ = ("_value", "_lock")

    def __init__(self, value: int = 0) -> None:
        self._value = value
        self._lock = threading.Lock()

    def get(self) -> int:
        return self._value

    def set(self, value: int) -> None:
        with self._lock:
            self._value = value

    def fetch_add(self, delta: int = 1) -> int:
        """Add delta, return the PRIOR value."""
        with self._lock:
            old = self._value
            self._value = old + delta
            return old

    def get_and_set(self, value: int) -> int:
        with self._lock:
            old = self._value
            self._value = value
            return old

    def compare_and_set(self, expected: int, new: int) -> bool:
        with self._lock:
            if self._value == expected:
                self._value = new
                return True
            return False


class AtomicRef(Generic[T]):
    """Reference word; CAS compares by identity."""

    __slots__ = ("_value", "_lock")

    def __init__(self, value: T = None) -> None:  # type: ignore[assignment]
        self._value = value
        self._lock = threading.Lock()

    def get(self) -> T:
        return self._value

    def set(self, value: T) -> None:
        with self._lock:
            self._value = value

    def compare_and_set(self, expected: Any, new: T) -> bool:
        with self._lock:
            if self._value is expected:
                self._value = new
                return True
            return False


# The synchronization contract mandates exactly two fence points: a store
# fence after publishing to the PPA, and a full fence before any PPA read.
# A lock acquire/release pair is a real two-way barrier on every CPython
# build (GIL or free-threaded), so both fences share one implementation.
_FENCE_LOCK = threading.Lock()


def store_fence() -> None:
    with _FENCE_LOCK:
        pass


def full_fence() -> None:
    with _FENCE_LOCK:
        pass


def spin_help(action: Callable[[], bool], attempts: int = 1_000_000) -> bool:
    """Run a CAS-style action until it reports done. Test utility."""
    for _ in range(attempts):
        if action():
            return True
    return False
