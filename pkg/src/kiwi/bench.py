"""Benchmark runner: workload suite, sizing rule, measurement protocol.

Each iteration builds a fresh prefilled map and hammers it for a fixed
wall-clock window from seeded per-thread operation streams; a start
barrier and a deadline frame the window, per-thread counters are summed
after the stop. With three or more iterations the most suspicious one
(furthest from the mean) is dropped before averaging. Absolute numbers
are machine-bound; the output exists for trend checks and CSV tooling.
"""

from __future__ import annotations

import csv
import random
import statistics
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Optional

from .core import TOMBSTONE, KiwiMap
from .reference import LockedSortedMap

GET_ONLY = "GetOnly"
PUT_DELETE_5050 = "PutDelete5050"
SCAN_ONLY_32K = "ScanOnly32K"
HALF_PUT_DELETE_HALF_SCAN = "HalfPutDeleteHalfScan"
WORKLOADS = (GET_ONLY, PUT_DELETE_5050, SCAN_ONLY_32K, HALF_PUT_DELETE_HALF_SCAN)

IMPL_KIWI = "kiwi"
IMPL_LOCKED = "locked"
IMPLS = (IMPL_KIWI, IMPL_LOCKED)


def steady_state_init_size(key_range: int, insert_pct: int, delete_pct: int) -> int:
    """Prefill that keeps the expected map size steady under a mix of
    insert_pct inserts and delete_pct deletes over key_range uniform
    keys: key_range * insert_pct / (insert_pct + delete_pct)."""
    if insert_pct + delete_pct <= 0:
        raise ValueError("insert_pct + delete_pct must be positive")
    return key_range * insert_pct // (insert_pct + delete_pct)


@dataclass
class WorkloadConfig:
    name: str
    threads: int
    key_range_max: int = 2_000_000
    init_size: Optional[int] = None  # derived from the steady-state rule
    scan_span: int = 32_768
    warmup_seconds: float = 20.0
    run_seconds: float = 5.0
    iterations: int = 10
    seed: int = 0
    # fixed per-thread op count instead of a wall-clock window; makes
    # single-thread runs bit-reproducible
    ops_budget: Optional[int] = None

    def __post_init__(self) -> None:
        if self.name not in WORKLOADS:
            raise ValueError(f"unknown workload {self.name!r}; choose from {WORKLOADS}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.scan_span < 1:
            raise ValueError("scan_span must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.init_size is None:
            self.init_size = steady_state_init_size(self.key_range_max, 50, 50)
        if self.init_size > self.key_range_max:
            raise ValueError("init_size cannot exceed key_range_max")


@dataclass
class MeasurementResult:
    workload: str
    impl: str
    threads: int
    # op_kind -> list of per-iteration throughputs (retained iterations)
    per_kind_raw: dict = field(default_factory=dict)
    dropped_iteration: Optional[int] = None

    def mean(self, kind: str) -> float:
        return statistics.fmean(self.per_kind_raw[kind])

    def stddev(self, kind: str) -> float:
        values = self.per_kind_raw[kind]
        return statistics.stdev(values) if len(values) > 1 else 0.0

    def total_mean(self) -> float:
        return sum(self.mean(kind) for kind in self.per_kind_raw)

    def rows(self) -> list[dict]:
        return [
            {
                "workload": self.workload,
                "impl": self.impl,
                "threads": self.threads,
                "op_kind": kind,
                "mean_ops_per_sec": f"{self.mean(kind):.2f}",
                "stddev": f"{self.stddev(kind):.2f}",
                "iterations": len(self.per_kind_raw[kind]),
            }
            for kind in sorted(self.per_kind_raw)
        ]


def drop_most_suspicious(values: list[float]) -> tuple[list[float], Optional[int]]:
    """Remove the value furthest from the mean; below three samples there
    is nothing to judge, keep them all."""
    if len(values) < 3:
        return list(values), None
    mean = statistics.fmean(values)
    idx = max(range(len(values)), key=lambda i: abs(values[i] - mean))
    return [v for i, v in enumerate(values) if i != idx], idx


def make_map(impl: str, threads: int, max_items: int = 4500, bounds_enabled: bool = False) -> Any:
    if impl == IMPL_KIWI:
        return KiwiMap(max_threads=threads + 1, max_items=max_items, bounds_enabled=bounds_enabled)
    if impl == IMPL_LOCKED:
        return LockedSortedMap(max_threads=threads + 1, bounds_enabled=bounds_enabled)
    raise ValueError(f"unknown impl {impl!r}; choose from {IMPLS}")


def prefill(target: Any, cfg: WorkloadConfig, rng: random.Random) -> dict:
    """Insert init_size distinct uniform keys; returns the inserted dict."""
    target.register_thread()
    inserted: dict = {}
    while len(inserted) < cfg.init_size:
        key = rng.randrange(cfg.key_range_max)
        if key not in inserted:
            value = rng.randrange(1 << 30)
            inserted[key] = value
            target.put(key, value)
    return inserted


def _thread_role(cfg: WorkloadConfig, tid: int) -> str:
    if cfg.name == HALF_PUT_DELETE_HALF_SCAN:
        # half the threads mutate, half scan (odd counts favor mutators)
        return "scan" if tid >= (cfg.threads + 1) // 2 else "putdelete"
    if cfg.name == GET_ONLY:
        return "get"
    if cfg.name == PUT_DELETE_5050:
        return "putdelete"
    return "scan"


def _worker_loop(target: Any, cfg: WorkloadConfig, role: str, rng: random.Random, deadline: float, counts: dict) -> None:
    key_range = cfg.key_range_max
    span = cfg.scan_span
    budget = cfg.ops_budget
    n = 0
    check_every = 32
    while True:
        if budget is not None:
            if n >= budget:
                break
        elif n % check_every == 0 and time.monotonic() >= deadline:
            break
        if role == "get":
            target.get(rng.randrange(key_range))
            counts["get"] += 1
        elif role == "putdelete":
            key = rng.randrange(key_range)
            if rng.random() < 0.5:
                target.put(key, rng.randrange(1 << 30))
                counts["put"] += 1
            else:
                target.put(key, TOMBSTONE)
                counts["delete"] += 1
        else:
            lo = rng.randrange(key_range)
            target.scan(lo, lo + span)
            counts["scan"] += 1
        n += 1


def run_iteration(cfg: WorkloadConfig, impl: str, iteration: int, bounds_debug: bool = False) -> dict:
    """One timed window on a fresh prefilled map: op-kind -> ops/second.
    With bounds_debug the size bounds are enabled and the quiescent
    bracket (lower <= true size <= upper) is asserted after the window."""
    target = make_map(impl, cfg.threads, bounds_enabled=bounds_debug)
    rng = random.Random(cfg.seed * 1009 + iteration)
    prefill(target, cfg, rng)

    barrier = threading.Barrier(cfg.threads + 1)
    counts = [dict.fromkeys(("put", "delete", "get", "scan"), 0) for _ in range(cfg.threads)]
    errors: list[BaseException] = []

    def work(tid: int) -> None:
        try:
            target.register_thread()
            worker_rng = random.Random(cfg.seed * 31337 + iteration * 97 + tid)
            role = _thread_role(cfg, tid)
            barrier.wait()
            deadline = time.monotonic() + cfg.run_seconds
            _worker_loop(target, cfg, role, worker_rng, deadline, counts[tid])
        except BaseException as exc:
            errors.append(exc)
            try:
                barrier.abort()
            except threading.BrokenBarrierError:
                pass

    threads = [threading.Thread(target=work, args=(tid,)) for tid in range(cfg.threads)]
    for t in threads:
        t.start()
    start = time.monotonic()
    try:
        barrier.wait()
    except threading.BrokenBarrierError:
        pass  # a worker failed before the start line; surfaced below
    for t in threads:
        t.join()
    elapsed = max(time.monotonic() - start, 1e-9)
    if errors:
        raise errors[0]

    if bounds_debug:
        lower = target.size_lower_bound()
        upper = target.size_upper_bound()
        true_size = len(target.items())
        if not lower <= true_size <= upper:
            raise AssertionError(
                f"size-bound bracket violated after iteration: {lower} <= {true_size} <= {upper}"
            )

    totals = dict.fromkeys(("put", "delete", "get", "scan"), 0)
    for per in counts:
        for kind, count in per.items():
            totals[kind] += count
    return {kind: count / elapsed for kind, count in totals.items() if count}


def run_workload(cfg: WorkloadConfig, impl: str, bounds_debug: bool = False) -> MeasurementResult:
    if impl not in IMPLS:
        raise ValueError(f"unknown impl {impl!r}; choose from {IMPLS}")
    if cfg.warmup_seconds > 0:
        _warmup(cfg, impl)
    per_iteration: list[dict] = [
        run_iteration(cfg, impl, i, bounds_debug=bounds_debug) for i in range(cfg.iterations)
    ]
    totals = [sum(rates.values()) for rates in per_iteration]
    _, dropped = drop_most_suspicious(totals)
    retained = [rates for i, rates in enumerate(per_iteration) if i != dropped]
    kinds = sorted({kind for rates in retained for kind in rates})
    result = MeasurementResult(
        workload=cfg.name,
        impl=impl,
        threads=cfg.threads,
        per_kind_raw={kind: [rates.get(kind, 0.0) for rates in retained] for kind in kinds},
        dropped_iteration=dropped,
    )
    return result


def _warmup(cfg: WorkloadConfig, impl: str) -> None:
    """Mixed ops against a throwaway map before any measurement."""
    target = make_map(impl, 1)
    target.register_thread()
    rng = random.Random(cfg.seed ^ 0xC0FFEE)
    deadline = time.monotonic() + cfg.warmup_seconds
    key_range = max(2, min(cfg.key_range_max, 4096))
    n = 0
    while time.monotonic() < deadline:
        key = rng.randrange(key_range)
        roll = rng.random()
        if roll < 0.4:
            target.put(key, rng.randrange(1 << 30))
        elif roll < 0.6:
            target.put(key, TOMBSTONE)
        elif roll < 0.9:
            target.get(key)
        else:
            target.scan(key, key + 64)
        n += 1


def emit_results(results: list[MeasurementResult], path: str) -> None:
    """One CSV: header plus a row per (workload, impl, threads, op_kind),
    deterministically ordered."""
    rows = [row for result in results for row in result.rows()]
    rows.sort(key=lambda r: (r["workload"], r["impl"], r["threads"], r["op_kind"]))
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh,
                fieldnames=(
                    "workload",
                    "impl",
                    "threads",
                    "op_kind",
                    "mean_ops_per_sec",
                    "stddev",
                    "iterations",
                ),
            )
            writer.writeheader()
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
