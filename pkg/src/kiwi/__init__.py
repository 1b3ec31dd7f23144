"""Chunked multi-version concurrent sorted map with linearizable size
bounds, a linearizability fuzzing harness, and a benchmark CLI."""

from .bench import (
    IMPLS,
    WORKLOADS,
    MeasurementResult,
    WorkloadConfig,
    emit_results,
    run_workload,
    steady_state_init_size,
)
from .bounds import BoundsCounters, BoundsDisabledError
from .checker import (
    EXHAUSTED,
    LINEARIZABLE,
    NOT_LINEARIZABLE,
    CheckResult,
    check_linearizable,
    oracle_apply,
    oracle_replay,
    validate_put_only_final_state,
)
from .core import (
    FROZEN,
    TOMBSTONE,
    InsertOutcome,
    KiwiMap,
    OrderEntry,
    RegistrationError,
    overwrite_data_index,
)
from .fuzz import FuzzConfig, generate_ops, record_locked_oracle_run, record_run
from .history import History, HistoryFormatError, OpRecord, load_history, save_history
from .rebalance import RebalancePolicy, check_rebalance, copy_range
from .reference import LockedSortedMap

__version__ = "0.1.0"

__all__ = [
    "BoundsCounters",
    "BoundsDisabledError",
    "CheckResult",
    "EXHAUSTED",
    "FROZEN",
    "FuzzConfig",
    "History",
    "HistoryFormatError",
    "IMPLS",
    "InsertOutcome",
    "KiwiMap",
    "LINEARIZABLE",
    "LockedSortedMap",
    "MeasurementResult",
    "NOT_LINEARIZABLE",
    "OpRecord",
    "OrderEntry",
    "RebalancePolicy",
    "RegistrationError",
    "TOMBSTONE",
    "WORKLOADS",
    "WorkloadConfig",
    "check_linearizable",
    "check_rebalance",
    "copy_range",
    "emit_results",
    "generate_ops",
    "load_history",
    "oracle_apply",
    "oracle_replay",
    "overwrite_data_index",
    "record_locked_oracle_run",
    "record_run",
    "run_workload",
    "save_history",
    "steady_state_init_size",
    "validate_put_only_final_state",
]
