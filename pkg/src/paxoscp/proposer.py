"""Transaction Client side of the commit protocol.

The pure functions here decide what value to propose from a set of PREPARE
responses: the classic highest-ballot rule, and the Paxos-CP rule that can
instead combine several non-conflicting transactions into one log entry or
promote a losing transaction to the next log position. :class:`Proposer`
drives one Paxos instance over the simulated network.
"""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .acceptor import NULL_BALLOT, Ballot
from .simnet import Message, Network
from .wal import LogEntry, TxnRecord, is_internally_serializable

logger = logging.getLogger(__name__)

BASIC = "BASIC"
CP = "CP"

COMBINE = "COMBINE"
PROMOTE = "PROMOTE"

FIRST = "FIRST"
NOT_FIRST = "NOT_FIRST"

# safety checks that the mutation tests switch off
MUTATE_COMBINE = "combine-unchecked"
MUTATE_PROMOTE = "promote-unchecked"


class Unavailable(Exception):
    """No majority of datacenters could be reached within the retry budget."""


@dataclass(frozen=True)
class VoteResponse:
    datacenter: int
    ok: bool
    last_ballot: Ballot = NULL_BALLOT
    last_value: Optional[LogEntry] = None
    promise: Ballot = NULL_BALLOT


@dataclass
class ProtocolConfig:
    mode: str = CP
    fast_path: bool = True
    retry_budget: int = 50
    promotion_cap: Optional[int] = None
    combine_limit: int = 4
    # "all": a PREPARE round waits for every reply (or the timeout);
    # "quorum": it stops at the first majority of promises
    prepare_wait: str = "all"
    mutations: frozenset = frozenset()

    def __post_init__(self):
        self.mode = self.mode.upper()
        if self.mode not in (BASIC, CP):
            raise ValueError(f"unknown protocol mode {self.mode!r}")
        if self.prepare_wait not in ("all", "quorum"):
            raise ValueError("prepare_wait must be 'all' or 'quorum'")
        self.mutations = frozenset(self.mutations)


def quorum(datacenters: int) -> int:
    return datacenters // 2 + 1


# ---------------------------------------------------------------------------
# value selection


def find_winning_val(responses: Sequence[VoteResponse], prop_val: LogEntry) -> LogEntry:
    max_prop = NULL_BALLOT
    winner = None
    for r in responses:
        if r.last_value is not None and r.last_ballot > max_prop:
            max_prop = r.last_ballot
            winner = r.last_value
    return prop_val if winner is None else winner


def _tally(responses: Sequence[VoteResponse]):
    """Votes per distinct value, compared structurally; ballots are ignored."""
    values: list[LogEntry] = []
    counts: list[int] = []
    top: list[Ballot] = []
    for r in responses:
        if r.last_value is None:
            continue
        for i, v in enumerate(values):
            if v == r.last_value:
                counts[i] += 1
                top[i] = max(top[i], r.last_ballot)
                break
        else:
            values.append(r.last_value)
            counts.append(1)
            top.append(r.last_ballot)
    return values, counts, top


def chosen_value(responses: Sequence[VoteResponse], datacenters: int) -> Optional[LogEntry]:
    """A value accepted by a majority at one ballot, hence already chosen."""
    by_ballot = Counter(r.last_ballot for r in responses if r.last_value is not None)
    for ballot, n in by_ballot.items():
        if n >= quorum(datacenters):
            return next(r.last_value for r in responses
                        if r.last_ballot == ballot and r.last_value is not None)
    return None


def decide_cp(responses: Sequence[VoteResponse], prop_val: LogEntry, datacenters: int,
              own_id=None, combine_limit: int = 4, check_reads: bool = True):
    """Choose between combination, promotion and the basic rule.

    Returns ``(COMBINE, entry)``, ``(PROMOTE, winners)`` or ``(BASIC, entry)``.
    ``responses`` are the promises (successful PREPARE replies) only.
    """
    m = quorum(datacenters)
    if own_id is None:
        own_id = prop_val.txns[0].txn_id
    values, counts, top = _tally(responses)
    max_votes = max(counts, default=0)
    if max_votes + (datacenters - len(responses)) < m:
        return COMBINE, generate_combined_value(responses, prop_val, combine_limit, check_reads)
    if max_votes >= m:
        winner = chosen_value(responses, datacenters)
        if winner is not None and not winner.contains(own_id):
            return PROMOTE, winner
    return BASIC, find_winning_val(responses, prop_val)


def generate_combined_value(responses: Sequence[VoteResponse], prop_val: LogEntry,
                            limit: int = 4, check_reads: bool = True) -> LogEntry:
    """Own transaction first, then the longest serializable extension.

    Up to ``limit`` candidates every subset in every order is tried (longest
    list wins, ties go to the lowest txn-id sequence); past that one greedy
    pass in txn-id order is made.
    """
    own = list(prop_val.txns)
    seen = {t.txn_id for t in own}
    pool: dict = {}
    for r in responses:
        if r.last_value is None:
            continue
        for t in r.last_value.txns:
            if t.txn_id not in seen:
                pool.setdefault(t.txn_id, t)
    candidates = [pool[k] for k in sorted(pool)]

    def ok(seq):
        return not check_reads or is_internally_serializable(seq)

    if len(candidates) <= limit:
        for size in range(len(candidates), 0, -1):
            for order in itertools.permutations(candidates, size):
                if ok(own + list(order)):
                    return LogEntry.of(*own, *order)
        return LogEntry.of(*own)
    chosen = list(own)
    for t in candidates:
        if ok(chosen + [t]):
            chosen.append(t)
    return LogEntry.of(*chosen)


def try_promote(txn: TxnRecord, winners: LogEntry, check_reads: bool = True) -> bool:
    """May ``txn`` move past ``winners`` to the next log position?"""
    if not check_reads:
        return True
    return not (txn.read_keys() & winners.write_keys())


def next_prop_number(responses: Sequence[VoteResponse], current: Ballot,
                     proposer: Optional[int] = None) -> Ballot:
    proposer = current.proposer if proposer is None else proposer
    top = current.counter
    for r in responses:
        top = max(top, r.last_ballot.counter, r.promise.counter)
    return Ballot(top + 1, proposer)


# ---------------------------------------------------------------------------
# instance driver


@dataclass
class InstanceResult:
    chosen: LogEntry
    own_won: bool
    ballot: Ballot = NULL_BALLOT


@dataclass
class Promote:
    winners: LogEntry


@dataclass
class Proposer:
    """Runs Paxos instances on behalf of one client or service."""

    net: Network
    node: str
    pid: int
    config: ProtocolConfig
    on_combine: Optional[Callable] = None
    trace: list = field(default_factory=list)
    # highest ballot this proposer has sent per (group, position); a later
    # instance at the same position must never reuse one with another value
    used: dict = field(default_factory=dict)

    @property
    def datacenters(self) -> int:
        return self.net.topology.datacenters

    def _services(self):
        return [self.net.service_name(d) for d in range(self.datacenters)]

    def _record(self, group, position, ballot, phase, action, outcome):
        self.trace.append({"proposer": self.pid, "group": group, "position": position,
                           "ballot": list(ballot), "phase": phase, "action": action,
                           "outcome": outcome, "t": round(self.net.sim.now, 6)})

    def _backoff(self):
        rtt = max(self.net.topology.rtt_max(), 1.0)
        return self.net.sim.timeout(self.net.sim.rng.uniform(1.0, 2.0) * rtt)

    def register(self, group, position: int, leader: int):
        """Ask the position's leader whether we are the first committer."""
        req = Message("REGISTER", {"group": group, "position": position, "proposer": self.pid})
        replies = yield self.net.gather(self.node, [(self.net.service_name(leader), req)])
        if not replies:
            self._record(group, position, Ballot(0, self.pid), "REGISTER", "leader", "UNAVAILABLE")
            return None
        status = FIRST if replies[0].body["first"] else NOT_FIRST
        self._record(group, position, Ballot(0, self.pid), "REGISTER", "leader", status)
        return status

    def _accept_round(self, group, position, ballot, value):
        m = quorum(self.datacenters)
        reqs = [(s, Message("ACCEPT", {"group": group, "position": position, "ballot": ballot,
                                      "value": value, "proposer": self.pid}))
                for s in self._services()]
        replies = yield self.net.gather(
            self.node, reqs, enough=lambda rs: sum(r.kind == "ACCEPT_OK" for r in rs) >= m)
        acks = sum(r.kind == "ACCEPT_OK" for r in replies)
        promises = [VoteResponse(-1, False, promise=r.body["promise"]) for r in replies]
        return acks >= m, promises

    def _apply(self, group, position, ballot, value):
        for s in self._services():
            self.net.send(self.node, s, Message("APPLY", {
                "group": group, "position": position, "ballot": ballot,
                "value": value, "proposer": self.pid}))

    def run_instance(self, group, position: int, own_value: LogEntry,
                     mode: Optional[str] = None, fast: bool = False, own_id=None):
        """Drive PREPARE/ACCEPT/APPLY until a value is chosen for ``position``.

        Returns :class:`InstanceResult`, or :class:`Promote` when Paxos-CP
        learns that another value already holds a majority.
        """
        mode = self.config.mode if mode is None else mode
        d = self.datacenters
        m = quorum(d)
        if own_id is None and own_value.txns:
            own_id = own_value.txns[0].txn_id
        key = (group, position)
        ballot = Ballot(max(self.used.get(key, NULL_BALLOT).counter + 1, 1), self.pid)

        if fast and key not in self.used:
            zero = Ballot(0, self.pid)
            self.used[key] = zero
            won, promises = yield from self._accept_round(group, position, zero, own_value)
            self._record(group, position, zero, "ACCEPT", "fast-path", "OK" if won else "FAIL")
            if won:
                self._apply(group, position, zero, own_value)
                return InstanceResult(own_value, True, zero)
            ballot = max(ballot, next_prop_number(promises, zero, self.pid))

        for _cycle in range(self.config.retry_budget):
            self.used[key] = ballot
            reqs = [(s, Message("PREPARE", {"group": group, "position": position,
                                            "ballot": ballot, "proposer": self.pid}))
                    for s in self._services()]
            enough = None
            if self.config.prepare_wait == "quorum":
                enough = lambda rs: sum(r.kind == "PREPARE_OK" for r in rs) >= m  # noqa: E731
            replies = yield self.net.gather(self.node, reqs, enough=enough)
            responses = [_vote(r) for r in replies]
            promised = [r for r in responses if r.ok]
            if len(promised) < m:
                self._record(group, position, ballot, "PREPARE", "retry", f"{len(promised)}/{d}")
                yield self._backoff()
                ballot = next_prop_number(responses, ballot, self.pid)
                continue

            if mode == CP:
                action, value = decide_cp(
                    promised, own_value, d, own_id, self.config.combine_limit,
                    check_reads=MUTATE_COMBINE not in self.config.mutations)
                self._record(group, position, ballot, "PREPARE", action, len(value.txns))
                if action == PROMOTE:
                    return Promote(value)
                if action == COMBINE and self.on_combine is not None:
                    self.on_combine(group, position, ballot, promised, value)
            else:
                value = find_winning_val(promised, own_value)
                self._record(group, position, ballot, "PREPARE", BASIC, len(value.txns))

            won, promises = yield from self._accept_round(group, position, ballot, value)
            self._record(group, position, ballot, "ACCEPT", "propose", "OK" if won else "FAIL")
            if not won:
                yield self._backoff()
                ballot = next_prop_number(promises, ballot, self.pid)
                continue
            self._apply(group, position, ballot, value)
            own_won = own_id is not None and value.contains(own_id)
            return InstanceResult(value, own_won, ballot)

        raise Unavailable(f"proposer {self.pid}: no quorum for {group!r}@{position} "
                          f"after {self.config.retry_budget} PREPARE rounds")


def _vote(msg: Message) -> VoteResponse:
    b = msg.body
    dc = int(msg.src[2:]) if msg.src.startswith("dc") else -1
    if msg.kind == "PREPARE_OK":
        return VoteResponse(dc, True, b["last_ballot"], b["last_value"], b["ballot"])
    return VoteResponse(dc, False, b.get("last_ballot", NULL_BALLOT), None, b["promise"])
