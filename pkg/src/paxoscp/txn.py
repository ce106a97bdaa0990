"""Transaction Client: begin / read / write / commit.

``begin``, ``read`` and ``commit`` talk to Transaction Services and are
generators to be driven inside a simulation process (``yield from``);
``write`` is local. Reads not satisfied by the transaction's own writes all
observe the log as of the read position fixed at ``begin``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Hashable, Mapping, Optional

from .mvstore import UNSET
from .proposer import (BASIC, CP, FIRST, MUTATE_PROMOTE, InstanceResult, Promote, Proposer,
                       ProtocolConfig, Unavailable, try_promote)
from .simnet import Message, Network
from .wal import LogEntry, TxnRecord

logger = logging.getLogger(__name__)

ACTIVE = "ACTIVE"
COMMITTED = "COMMITTED"
ABORTED = "ABORTED"
UNAVAILABLE = "UNAVAILABLE"

COMMIT = "COMMIT"
ABORT = "ABORT"


class GroupMismatch(Exception):
    """A key outside the transaction's group was accessed."""


class TransactionError(Exception):
    """Operation on a finished transaction, or a second active one per group."""


@dataclass
class ActiveTxn:
    txn_id: tuple
    group: Hashable
    read_position: int
    leader: int = 0
    read_set: list = field(default_factory=list)
    write_set: dict = field(default_factory=dict)
    status: str = ACTIVE
    ops: list = field(default_factory=list)
    origin: int = 0
    begin_ms: float = 0.0
    end_ms: Optional[float] = None
    outcome: Optional["CommitOutcome"] = None

    def record(self) -> TxnRecord:
        seen = {}
        for key, value in self.read_set:
            seen.setdefault(key, value)
        return TxnRecord(self.txn_id, self.group, self.read_position,
                         tuple(seen.items()),
                         tuple((k, dict(v)) for k, v in self.write_set.items()),
                         self.origin)


@dataclass
class CommitOutcome:
    decision: str
    final_position: Optional[int]
    promotions: int = 0
    combined: bool = False


class TransactionClient:
    def __init__(self, net: Network, client_id: int, dc: int, pid: int,
                 config: ProtocolConfig, catalog: Optional[Mapping] = None,
                 on_combine=None):
        self.net = net
        self.client_id = client_id
        self.dc = dc
        self.config = config
        self.catalog = catalog
        self.name = f"client{client_id}"
        self.node = net.register(self.name, dc)
        self.proposer = Proposer(net, self.name, pid, config, on_combine=on_combine)
        self.active: dict = {}
        self.history: list[ActiveTxn] = []
        self._seq = 0

    def _ring(self):
        d = self.net.topology.datacenters
        return [self.net.service_name((self.dc + i) % d) for i in range(d)]

    def _request(self, kind: str, body: dict):
        """Ask services in failover order until one answers."""
        for _attempt in range(self.config.retry_budget):
            for service in self._ring():
                replies = yield self.net.gather(self.node.name, [(service, Message(kind, dict(body)))])
                if replies:
                    return replies[0]
        raise Unavailable(f"{self.name}: no datacenter answered {kind}")

    def begin(self, group):
        if group in self.active:
            raise TransactionError(f"{self.name} already has an active transaction on {group!r}")
        reply = yield from self._request("BEGIN", {"group": group})
        self._seq += 1
        txn = ActiveTxn((self.client_id, self._seq), group, reply.body["position"],
                        leader=reply.body["leader"], origin=self.dc, begin_ms=self.net.sim.now)
        self.active[group] = txn
        self.history.append(txn)
        return txn

    def _check(self, txn: ActiveTxn, key) -> None:
        if txn.status != ACTIVE:
            raise TransactionError(f"transaction {txn.txn_id} is {txn.status}")
        if self.catalog is not None and self.catalog.get(key, txn.group) != txn.group:
            raise GroupMismatch(f"{key!r} belongs to {self.catalog[key]!r}, not {txn.group!r}")

    def read(self, txn: ActiveTxn, key):
        self._check(txn, key)
        if key in txn.write_set:
            value = txn.write_set[key]
            txn.ops.append(("r", key, dict(value), True))
            return value
        reply = yield from self._request("READ", {"group": txn.group, "key": key,
                                                  "read_position": txn.read_position})
        raw = reply.body["value"]
        value = UNSET if raw is None else raw
        txn.read_set.append((key, value))
        txn.ops.append(("r", key, raw, False))
        return value

    def write(self, txn: ActiveTxn, key, value: Mapping[str, Any]) -> None:
        self._check(txn, key)
        txn.write_set[key] = dict(value)
        txn.ops.append(("w", key, dict(value), False))

    def commit(self, txn: ActiveTxn, mode: Optional[str] = None):
        if txn.status != ACTIVE:
            raise TransactionError(f"transaction {txn.txn_id} is {txn.status}")
        mode = (mode or self.config.mode).upper()
        if not txn.write_set:
            return self._finish(txn, CommitOutcome(COMMIT, None))

        record = txn.record()
        own = LogEntry.of(record)
        position = txn.read_position + 1
        promotions = 0
        fast = False
        if self.config.fast_path:
            status = yield from self.proposer.register(txn.group, position, txn.leader)
            fast = status == FIRST
        while True:
            try:
                result = yield from self.proposer.run_instance(
                    txn.group, position, own, mode, fast=fast and promotions == 0)
            except Unavailable:
                txn.status = UNAVAILABLE
                txn.end_ms = self.net.sim.now
                txn.outcome = CommitOutcome(UNAVAILABLE, position, promotions)
                self.active.pop(txn.group, None)
                raise
            if isinstance(result, InstanceResult):
                if result.own_won:
                    return self._finish(txn, CommitOutcome(
                        COMMIT, position, promotions, len(result.chosen.txns) > 1))
                winners = result.chosen
            else:
                assert isinstance(result, Promote)
                winners = result.winners
            if mode == BASIC:
                return self._finish(txn, CommitOutcome(ABORT, position, promotions))
            cap = self.config.promotion_cap
            if cap is not None and promotions >= cap:
                return self._finish(txn, CommitOutcome(ABORT, position, promotions))
            if not try_promote(record, winners, MUTATE_PROMOTE not in self.config.mutations):
                return self._finish(txn, CommitOutcome(ABORT, position, promotions))
            promotions += 1
            position += 1

    def _finish(self, txn: ActiveTxn, outcome: CommitOutcome) -> CommitOutcome:
        txn.status = COMMITTED if outcome.decision == COMMIT else ABORTED
        txn.outcome = outcome
        txn.end_ms = self.net.sim.now
        self.active.pop(txn.group, None)
        return outcome
