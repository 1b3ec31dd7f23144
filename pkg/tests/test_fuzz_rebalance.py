"""Linearizability fuzzing under rebalance pressure: tiny chunks make
every run split repeatedly while readers, scanners, and writers race the
freeze/help/copy/replace pipeline. This is the regime the original
testing effort left thinnest, so it gets its own gate."""

from kiwi import FuzzConfig, check_linearizable
from kiwi.fuzz import record_run


def test_single_chunk_range_with_constant_splits():
    for seed in range(60):
        cfg = FuzzConfig(
            threads=2 + seed % 2,
            ops_per_thread=13,
            key_range=8,
            seed=seed,
            max_items=8,
            delay_prob=0.35,
            delay_max_s=0.0005,
        )
        history = record_run(cfg)
        result = check_linearizable(history, node_budget=2_000_000)
        assert result.ok, f"seed {seed}: {result.status}"


def test_multi_chunk_scans_during_splits():
    for seed in range(60):
        cfg = FuzzConfig(
            threads=3,
            ops_per_thread=13,
            key_range=24,
            seed=seed,
            max_items=6,
            delay_prob=0.3,
            delay_max_s=0.0004,
            scan_span=24,
            mix={"put": 3, "delete": 2, "get": 3, "scan": 2},
        )
        history = record_run(cfg)
        result = check_linearizable(history, node_budget=4_000_000)
        assert result.ok, f"seed {seed}: {result.status}"
