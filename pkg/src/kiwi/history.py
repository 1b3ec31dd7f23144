"""Timestamped operation histories: record, validate, save, load.

A history is a list of per-thread sequential operation records with
monotonic invoke/response timestamps. The file format is one JSON object
per line, prefixed by one metadata line, so failures are greppable and
diffs are reviewable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

PUT = "put"
GET = "get"
SCAN = "scan"
SIZE = "size"
IS_EMPTY = "is_empty"
KINDS = (PUT, GET, SCAN, SIZE, IS_EMPTY)


class HistoryFormatError(ValueError):
    """Raised on malformed history files; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class OpRecord:
    """One invocation: thread, kind, args, observed result, and interval.

    Tombstone put args and absent get results are both encoded as None
    (payloads are ints, so None is unambiguous). Scan results are tuples
    of (key, value) pairs.
    """

    thread_id: int
    kind: str
    args: tuple
    result: Any
    invoke_ts: int
    response_ts: int

    def overlaps(self, other: "OpRecord") -> bool:
        return self.invoke_ts < other.response_ts and other.invoke_ts < self.response_ts

    def to_json(self) -> str:
        return json.dumps(
            {
                "thread": self.thread_id,
                "kind": self.kind,
                "args": list(self.args),
                "result": _result_to_json(self.kind, self.result),
                "invoke": self.invoke_ts,
                "response": self.response_ts,
            },
            separators=(",", ":"),
        )

    @staticmethod
    def from_json(line: str, line_no: int) -> "OpRecord":
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise HistoryFormatError(line_no, f"invalid JSON: {exc.msg}") from exc
        try:
            kind = obj["kind"]
            if kind not in KINDS:
                raise HistoryFormatError(line_no, f"unknown op kind {kind!r}")
            return OpRecord(
                thread_id=obj["thread"],
                kind=kind,
                args=tuple(obj["args"]),
                result=_result_from_json(kind, obj["result"]),
                invoke_ts=obj["invoke"],
                response_ts=obj["response"],
            )
        except KeyError as exc:
            raise HistoryFormatError(line_no, f"missing field {exc.args[0]!r}") from exc


def _result_to_json(kind: str, result: Any) -> Any:
    if kind == SCAN:
        return [list(pair) for pair in result]
    return result


def _result_from_json(kind: str, result: Any) -> Any:
    if kind == SCAN:
        return tuple((k, v) for k, v in result)
    return result


@dataclass
class History:
    """Recorded run: records plus the recipe that produced them."""

    records: list[OpRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        """Well-formedness: each interval is positive and per-thread
        records are sequential (no self-overlap)."""
        per_thread: dict[int, list[OpRecord]] = {}
        for i, rec in enumerate(self.records):
            if rec.kind not in KINDS:
                raise ValueError(f"record {i}: unknown op kind {rec.kind!r}")
            if rec.invoke_ts >= rec.response_ts:
                raise ValueError(f"record {i}: invoke_ts must precede response_ts")
            per_thread.setdefault(rec.thread_id, []).append(rec)
        for thread_id, recs in per_thread.items():
            recs.sort(key=lambda r: r.invoke_ts)
            for a, b in zip(recs, recs[1:]):
                if b.invoke_ts < a.response_ts:
                    raise ValueError(f"thread {thread_id} overlaps its own operations")

    def threads(self) -> list[int]:
        return sorted({r.thread_id for r in self.records})

    def has_overlap(self) -> bool:
        """True when some pair of records from different threads overlaps."""
        max_response: dict[int, int] = {}
        for rec in sorted(self.records, key=lambda r: r.invoke_ts):
            for thread_id, response in max_response.items():
                if thread_id != rec.thread_id and rec.invoke_ts < response:
                    return True
            cur = max_response.get(rec.thread_id, 0)
            max_response[rec.thread_id] = max(cur, rec.response_ts)
        return False


def save_history(history: History, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": history.meta}, separators=(",", ":")) + "\n")
        for rec in history.records:
            fh.write(rec.to_json() + "\n")


def load_history(path: str) -> History:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise HistoryFormatError(1, "missing metadata line")
    try:
        header = json.loads(lines[0])
        meta = header["meta"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise HistoryFormatError(1, "metadata line is not a {'meta': ...} object") from exc
    records = [
        OpRecord.from_json(line, line_no)
        for line_no, line in enumerate(lines[1:], start=2)
        if line.strip()
    ]
    return History(records=records, meta=meta)
