"""Shared test machinery: raw chunk builders, invariant walkers, and
brute-force oracles kept independent of the code paths they check."""

from __future__ import annotations

import threading
from typing import Any, Iterable

from kiwi.core import END, TOMBSTONE, Chunk, KiwiMap, OrderEntry, logical_version


def raw_chunk(
    listed: Iterable[tuple[Any, int, Any]],
    pending: Iterable[tuple[Any, int, Any]] = (),
    capacity: int = 256,
    max_threads: int = 4,
) -> tuple[Chunk, list[OrderEntry]]:
    """Hand-built chunk: `listed` items (key, version, value-or-TOMBSTONE)
    wired into the linked list in the given order (caller supplies sorted
    input), `pending` items allocated and versioned but NOT linked, as if
    published to the PPA and helped. Returns the chunk and the pending
    entries."""
    chunk = Chunk(float("-inf"), float("inf"), capacity, max_threads)
    slot = 1
    prev = chunk.head
    for key, version, value in listed:
        entry = OrderEntry(key)
        entry.version = version
        if value is TOMBSTONE:
            entry.data_index = -slot
        else:
            entry.data_index = slot
            chunk.data[slot] = value
        chunk.order[slot] = entry
        prev.next = slot
        prev = entry
        slot += 1
    prev.next = END
    chunk.sorted_prefix_len = slot - 1
    chunk.list_size.set(slot - 1)
    pending_entries = []
    for key, version, value in pending:
        entry = OrderEntry(key)
        entry.version = -version  # pending encoding
        if value is TOMBSTONE:
            entry.data_index = -slot
        else:
            entry.data_index = slot
            chunk.data[slot] = value
        chunk.order[slot] = entry
        pending_entries.append(entry)
        slot += 1
    chunk._alloc_counter = slot
    return chunk, pending_entries


def walk_list(chunk: Chunk) -> list[OrderEntry]:
    out = []
    idx = chunk.head.next
    seen = set()
    while idx != END:
        assert idx not in seen, f"cycle through order index {idx}"
        seen.add(idx)
        entry = chunk.order[idx]
        out.append(entry)
        idx = entry.next
    return out


def assert_chunk_invariants(chunk: Chunk) -> None:
    """List strictly sorted by (key asc, version desc, |dataIndex| desc),
    no duplicate (key, version), keys inside the chunk range."""
    entries = walk_list(chunk)
    ranks = [(e.key, -logical_version(e.version), -abs(e.data_index)) for e in entries]
    assert ranks == sorted(ranks), f"list out of order: {ranks}"
    pairs = [(e.key, logical_version(e.version)) for e in entries]
    assert len(pairs) == len(set(pairs)), f"duplicate (key, version): {pairs}"
    for e in entries:
        assert chunk.min_key <= e.key < chunk.range_end


def assert_map_invariants(kiwi: KiwiMap) -> None:
    chunks = kiwi.chunks()
    gv = kiwi.global_version()
    for chunk in chunks:
        assert_chunk_invariants(chunk)
        for entry in walk_list(chunk):
            assert logical_version(entry.version) <= gv, "version beyond the global counter"
    boundaries = [(c.min_key, c.range_end) for c in chunks]
    for (lo1, hi1), (lo2, _) in zip(boundaries, boundaries[1:]):
        assert hi1 == lo2, f"chunk ranges do not tile: {boundaries}"


def quiescent_items(kiwi: KiwiMap) -> dict:
    """Independent drain: walk every chunk list directly, take the newest
    (version, |dataIndex|) item per key, drop tombstones. Valid only with
    no in-flight operations."""
    best: dict[Any, tuple[int, int, int, Chunk]] = {}
    for chunk in kiwi.chunks():
        for entry in walk_list(chunk):
            di = entry.data_index
            rank = (logical_version(entry.version), abs(di))
            cur = best.get(entry.key)
            if cur is None or rank > cur[:2]:
                best[entry.key] = (rank[0], rank[1], di, chunk)
    return {
        key: chunk.data[di]
        for key, (_, _, di, chunk) in best.items()
        if di >= 0
    }


def brute_force_range(
    items: list[tuple[Any, int, int, Any]],
    lo: Any,
    hi: Any,
    scan_version: int,
) -> list[tuple[Any, Any]]:
    """Oracle for copy_range: items are (key, version, data_index, value);
    per key in [lo, hi] pick the newest (version, |dataIndex|) with
    version <= scan_version, suppress tombstone winners."""
    best: dict[Any, tuple[tuple[int, int], Any, int]] = {}
    for key, version, data_index, value in items:
        if not lo <= key <= hi or version > scan_version:
            continue
        rank = (version, abs(data_index))
        cur = best.get(key)
        if cur is None or rank > cur[0]:
            best[key] = (rank, value, data_index)
    return [(k, value) for k, (_, value, di) in sorted(best.items()) if di >= 0]


class GateHook:
    """Pause hook that parks chosen threads at chosen put lifecycle points.

    gate(thread, point) arms a gate; the victim thread blocks there until
    release(thread, point). Other threads and points pass through.
    """

    def __init__(self) -> None:
        self._gates: dict[tuple[str, str], threading.Event] = {}
        self._arrived: dict[tuple[str, str], threading.Event] = {}
        self._once: set[tuple[str, str]] = set()
        self._lock = threading.Lock()

    def gate(self, thread_name: str, point: str, once: bool = True) -> None:
        key = (thread_name, point)
        self._gates[key] = threading.Event()
        self._arrived[key] = threading.Event()
        if once:
            self._once.add(key)

    def wait_arrived(self, thread_name: str, point: str, timeout: float = 5.0) -> None:
        assert self._arrived[(thread_name, point)].wait(timeout), (
            f"{thread_name} never reached {point}"
        )

    def release(self, thread_name: str, point: str) -> None:
        self._gates[(thread_name, point)].set()

    def __call__(self, point: str) -> None:
        key = (threading.current_thread().name, point)
        gate = self._gates.get(key)
        if gate is None:
            return
        with self._lock:
            if key in self._once and self._arrived[key].is_set():
                return
        self._arrived[key].set()
        assert gate.wait(10.0), f"gate {key} never released"
