"""Replicated write-ahead log: entries, per-datacenter log views, replay."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Iterator, Optional

from .mvstore import UNSET, Timestamp, VersionedStore

TXNLIST = "TXNLIST"
NOOP = "NOOP"


class ConflictingDecision(Exception):
    """Two different values were applied to the same log position."""

    def __init__(self, group, position, existing, incoming):
        super().__init__(f"group {group!r} position {position}: "
                         f"{existing.txn_ids()} already applied, got {incoming.txn_ids()}")
        self.group = group
        self.position = position
        self.existing = existing
        self.incoming = incoming


@dataclass(frozen=True)
class TxnRecord:
    """The committed form of a read/write transaction, as stored in the log."""

    txn_id: tuple
    group: Hashable
    read_position: int
    read_set: tuple = ()
    write_set: tuple = ()
    origin: int = 0

    def read_keys(self) -> set:
        return {key for key, _ in self.read_set}

    def write_keys(self) -> set:
        return {key for key, _ in self.write_set}

    def to_json(self) -> dict:
        return {
            "txn_id": list(self.txn_id),
            "group": self.group,
            "read_position": self.read_position,
            "read_set": [[k, _jsonable(v)] for k, v in self.read_set],
            "write_set": [[k, dict(v)] for k, v in self.write_set],
            "origin": self.origin,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TxnRecord":
        return cls(
            txn_id=tuple(data["txn_id"]),
            group=data["group"],
            read_position=data["read_position"],
            read_set=tuple((k, _from_jsonable(v)) for k, v in data["read_set"]),
            write_set=tuple((k, dict(v)) for k, v in data["write_set"]),
            origin=data.get("origin", 0),
        )


@dataclass(frozen=True)
class LogEntry:
    kind: str
    txns: tuple = ()

    @classmethod
    def of(cls, *txns: TxnRecord) -> "LogEntry":
        return cls(TXNLIST, tuple(txns))

    @property
    def is_noop(self) -> bool:
        return self.kind == NOOP

    def txn_ids(self) -> list:
        return [t.txn_id for t in self.txns]

    def contains(self, txn_id) -> bool:
        return any(t.txn_id == txn_id for t in self.txns)

    def write_keys(self) -> set:
        keys = set()
        for t in self.txns:
            keys |= t.write_keys()
        return keys

    def to_json(self) -> dict:
        return {"kind": self.kind, "txns": [t.to_json() for t in self.txns]}

    @classmethod
    def from_json(cls, data: dict) -> "LogEntry":
        return cls(data["kind"], tuple(TxnRecord.from_json(t) for t in data["txns"]))


NOOP_ENTRY = LogEntry(NOOP)


def is_internally_serializable(txns: Iterable[TxnRecord]) -> bool:
    """True when no transaction reads a row written by an earlier list member."""
    written: set = set()
    for t in txns:
        if t.read_keys() & written:
            return False
        written |= t.write_keys()
    return True


@dataclass
class LogView:
    """One datacenter's view of one transaction group's log.

    ``applied_through`` is the end of the contiguous prefix whose writes are
    in the store; decided entries past a gap wait until the gap is filled.
    """

    group: Hashable
    store: VersionedStore
    decided: dict = field(default_factory=dict)
    applied_through: int = 0

    def apply_entry(self, position: int, entry: LogEntry) -> bool:
        """Record the decided entry; returns False when it was already known."""
        if position < 1:
            raise ValueError("log positions start at 1")
        existing = self.decided.get(position)
        if existing is not None:
            if existing != entry:
                raise ConflictingDecision(self.group, position, existing, entry)
            return False
        self.decided[position] = entry
        while self.applied_through + 1 in self.decided:
            nxt = self.applied_through + 1
            for sub, txn in enumerate(self.decided[nxt].txns):
                for key, value in txn.write_set:
                    self.store.write(row_key(self.group, key), value, Timestamp(nxt, sub))
            self.applied_through = nxt
        return True

    def read_position(self) -> int:
        return self.applied_through

    def missing(self, up_to: int) -> list[int]:
        return [p for p in range(1, up_to + 1) if p not in self.decided]

    def has_gap(self) -> bool:
        return bool(self.decided) and max(self.decided) > self.applied_through

    def read(self, key: Hashable, read_position: int) -> Any:
        if read_position > self.applied_through:
            raise ValueError(f"log applied through {self.applied_through}, "
                             f"read requested at {read_position}")
        version = self.store.read(row_key(self.group, key), Timestamp.latest_in(read_position))
        return UNSET if version is None else version.attributes

    def dump(self, dc: int) -> Iterator[dict]:
        for position in sorted(self.decided):
            entry = self.decided[position]
            yield {"record": "log", "dc": dc, "group": self.group, "position": position,
                   "kind": entry.kind, "txns": [list(i) for i in entry.txn_ids()]}


def row_key(group: Hashable, key: Hashable) -> tuple:
    return ("data", group, key)


def replay(entries: Iterable[LogEntry], upto: Optional[int] = None) -> dict:
    """Serial single-copy replay of a sequence of entries (positions 1..)."""
    state: dict = {}
    for i, entry in enumerate(entries, start=1):
        if upto is not None and i > upto:
            break
        for txn in entry.txns:
            for key, value in txn.write_set:
                state[key] = dict(value)
    return state


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def _jsonable(value):
    if value is UNSET:
        return None
    if isinstance(value, dict):
        return dict(value)
    return value


def _from_jsonable(value):
    return UNSET if value is None else value
