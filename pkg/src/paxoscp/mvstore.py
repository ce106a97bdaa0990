"""In-memory multi-version key-value store.

One store lives in every datacenter. It holds both application rows and the
per-log-position Paxos acceptor cells, and offers the three atomic
operations the transaction tier is built on: ``read``, ``write`` and
``check_and_write``.
"""

from __future__ import annotations

import bisect
import sys
from dataclasses import dataclass, field
from typing import Any, Hashable, Mapping, NamedTuple, Optional


class Timestamp(NamedTuple):
    """Log position plus an ordinal inside a combined log entry."""

    position: int
    sub_index: int = 0

    @classmethod
    def latest_in(cls, position: int) -> "Timestamp":
        # upper bound covering every sub-index of ``position``
        return cls(position, sys.maxsize)


class _Unset:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNSET"

    def __reduce__(self):
        return (_Unset, ())


#: Sentinel for a row or attribute that was never written.
UNSET = _Unset()

SUCCESS = "SUCCESS"
FAILURE = "FAILURE"


class VersionOrderError(Exception):
    """A write would not be newer than every existing version of the row."""


@dataclass(frozen=True)
class RowVersion:
    key: Hashable
    timestamp: Timestamp
    attributes: Mapping[str, Any]

    def get(self, attribute: str) -> Any:
        return self.attributes.get(attribute, UNSET)


@dataclass
class VersionedStore:
    """Per-datacenter multi-version map from row key to timestamped versions.

    Every operation runs to completion before the next one starts (the
    simulator drives a store from a single timeline), which is what makes
    them atomic.
    """

    rows: dict = field(default_factory=dict)

    def versions(self, key: Hashable) -> list[RowVersion]:
        return list(self.rows.get(key, ()))

    def read(self, key: Hashable, timestamp: Optional[Timestamp] = None) -> Optional[RowVersion]:
        versions = self.rows.get(key)
        if not versions:
            return None
        if timestamp is None:
            return versions[-1]
        stamps = [v.timestamp for v in versions]
        idx = bisect.bisect_right(stamps, tuple(timestamp))
        return versions[idx - 1] if idx else None

    def write(self, key: Hashable, value: Mapping[str, Any],
              timestamp: Optional[Timestamp] = None) -> Timestamp:
        versions = self.rows.setdefault(key, [])
        if timestamp is None:
            if versions:
                last = versions[-1].timestamp
                timestamp = Timestamp(last.position + 1, 0)
            else:
                timestamp = Timestamp(0, 0)
        else:
            timestamp = Timestamp(*timestamp)
            # an equal timestamp is rejected too: versions are immutable
            if versions and versions[-1].timestamp >= timestamp:
                raise VersionOrderError(
                    f"{key!r}: version {versions[-1].timestamp} already exists, "
                    f"cannot write at {timestamp}")
        versions.append(RowVersion(key, timestamp, dict(value)))
        return timestamp

    def check_and_write(self, test_key: Hashable, test_attribute: str, test_value: Any,
                        key: Hashable, value: Mapping[str, Any]) -> str:
        latest = self.read(test_key)
        current = UNSET if latest is None else latest.get(test_attribute)
        if current != test_value:
            return FAILURE
        self.write(key, value)
        return SUCCESS

    def keys(self):
        return self.rows.keys()
