"""Transaction Service side of one Paxos instance per log position.

The acceptor keeps ``(next_bal, ballot_number, value)`` for each position as
a row in the datacenter's versioned store and changes it only through
``check_and_write`` on ``next_bal``, so its atomicity is the store's.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, NamedTuple, Optional

from .mvstore import FAILURE, SUCCESS, UNSET, VersionedStore
from .wal import LogEntry, LogView


class Ballot(NamedTuple):
    counter: int
    proposer: int

    def __str__(self) -> str:
        return f"{self.counter}.{self.proposer}"


#: Initial ``next_bal`` and ``ballot_number`` of every cell.
NULL_BALLOT = Ballot(-1, -1)


def is_zero_ballot(ballot: Ballot) -> bool:
    """The leader fast-path ballot, admitted without a prior promise."""
    return ballot.counter == 0


@dataclass(frozen=True)
class PaxosCell:
    next_bal: Ballot = NULL_BALLOT
    ballot_number: Ballot = NULL_BALLOT
    value: Optional[LogEntry] = None


@dataclass(frozen=True)
class PrepareReply:
    ok: bool
    ballot: Ballot
    last_ballot: Ballot = NULL_BALLOT
    last_value: Optional[LogEntry] = None
    promise: Ballot = NULL_BALLOT


@dataclass(frozen=True)
class AcceptReply:
    ok: bool
    ballot: Ballot
    promise: Ballot = NULL_BALLOT


def cell_key(group: Hashable, position: int) -> tuple:
    return ("paxos", group, position)


class Acceptor:
    def __init__(self, store: VersionedStore):
        self.store = store
        self.max_contention_retries = 8

    def cell(self, group, position) -> PaxosCell:
        row = self.store.read(cell_key(group, position))
        if row is None:
            return PaxosCell()
        return PaxosCell(row.get("next_bal"), row.get("ballot_number"), row.get("value"))

    def _raw_next_bal(self, group, position):
        row = self.store.read(cell_key(group, position))
        return UNSET if row is None else row.get("next_bal")

    def on_prepare(self, group, position: int, ballot: Ballot) -> PrepareReply:
        key = cell_key(group, position)
        for _ in range(self.max_contention_retries):
            raw = self._raw_next_bal(group, position)
            current = self.cell(group, position)
            if not ballot > current.next_bal:
                return PrepareReply(False, ballot, current.ballot_number, None, current.next_bal)
            status = self.store.check_and_write(
                key, "next_bal", raw, key,
                {"next_bal": ballot, "ballot_number": current.ballot_number,
                 "value": current.value})
            if status == SUCCESS:
                return PrepareReply(True, ballot, current.ballot_number, current.value, ballot)
            # next_bal moved under us; re-read and decide again
        current = self.cell(group, position)
        return PrepareReply(False, ballot, current.ballot_number, None, current.next_bal)

    def on_accept(self, group, position: int, ballot: Ballot, value: LogEntry) -> AcceptReply:
        key = cell_key(group, position)
        new = {"next_bal": ballot, "ballot_number": ballot, "value": value}
        status = self.store.check_and_write(key, "next_bal", ballot, key, new)
        if status != SUCCESS and is_zero_ballot(ballot):
            status = self.store.check_and_write(key, "next_bal", UNSET, key, new)
        return AcceptReply(status == SUCCESS, ballot, self.cell(group, position).next_bal)

    def on_apply(self, group, position: int, ballot: Ballot, value: LogEntry,
                 log: LogView) -> bool:
        fresh = log.apply_entry(position, value)
        cur = self.cell(group, position)
        # a chosen value may be recorded without a promise; both ballots stay monotone
        if ballot > cur.ballot_number:
            self.store.write(cell_key(group, position),
                             {"next_bal": max(cur.next_bal, ballot),
                              "ballot_number": ballot, "value": value})
        return fresh
