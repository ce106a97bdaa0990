"""A datacenter's Transaction Service: acceptor, log views, reads and catch-up."""

from __future__ import annotations

import logging
from typing import Hashable

from .acceptor import Acceptor
from .mvstore import UNSET, VersionedStore
from .proposer import BASIC, Proposer, ProtocolConfig, Unavailable
from .simnet import Message, Network
from .wal import NOOP_ENTRY, ConflictingDecision, LogView

logger = logging.getLogger(__name__)


class TransactionService:
    def __init__(self, net: Network, dc: int, config: ProtocolConfig):
        self.net = net
        self.dc = dc
        self.store = VersionedStore()
        self.acceptor = Acceptor(self.store)
        self.logs: dict[Hashable, LogView] = {}
        self.leaders: dict[tuple, int] = {}
        self.conflicts: list[ConflictingDecision] = []
        self.name = net.service_name(dc)
        self.node = net.register(self.name, dc, self.handle, is_service=True)
        # catch-up instances are plain basic Paxos proposing NOOP
        self.proposer = Proposer(net, self.name, pid=dc,
                                 config=ProtocolConfig(mode=BASIC, fast_path=False,
                                                       retry_budget=config.retry_budget))
        self._catchup: dict = {}
        self._gap_timer: set = set()

    def log(self, group) -> LogView:
        if group not in self.logs:
            self.logs[group] = LogView(group, self.store)
        return self.logs[group]

    def leader_for(self, group, position: int) -> int:
        """Datacenter of the client that won the previous position (0 by default)."""
        prev = self.log(group).decided.get(position - 1)
        if prev is None or prev.is_noop or not prev.txns:
            return 0
        return prev.txns[0].origin

    # -- message handling -------------------------------------------------

    def handle(self, msg: Message) -> None:
        getattr(self, "_on_" + msg.kind.lower())(msg)

    def _on_begin(self, msg):
        group = msg.body["group"]
        rp = self.log(group).read_position()
        self.net.reply(msg, "BEGIN_OK", {"position": rp, "leader": self.leader_for(group, rp + 1)})

    def _on_read(self, msg):
        b = msg.body
        log = self.log(b["group"])
        if log.applied_through >= b["read_position"]:
            self._reply_read(msg, log)
        else:
            self.net.sim.spawn(self._read_after_catch_up(msg, log), f"{self.name}-read")

    def _read_after_catch_up(self, msg, log):
        ok = yield from self.ensure_applied(log.group, msg.body["read_position"])
        if ok:
            self._reply_read(msg, log)

    def _reply_read(self, msg, log):
        value = log.read(msg.body["key"], msg.body["read_position"])
        self.net.reply(msg, "READ_OK", {"value": None if value is UNSET else dict(value)})

    def _on_register(self, msg):
        key = (msg.body["group"], msg.body["position"])
        first = key not in self.leaders
        if first:
            self.leaders[key] = msg.body["proposer"]
        self.net.reply(msg, "REGISTER_OK", {"first": first})

    def _on_prepare(self, msg):
        b = msg.body
        r = self.acceptor.on_prepare(b["group"], b["position"], b["ballot"])
        if r.ok:
            self.net.reply(msg, "PREPARE_OK", {"ballot": r.ballot, "last_ballot": r.last_ballot,
                                               "last_value": r.last_value})
        else:
            self.net.reply(msg, "PREPARE_FAIL", {"ballot": r.ballot, "promise": r.promise,
                                                 "last_ballot": r.last_ballot})

    def _on_accept(self, msg):
        b = msg.body
        r = self.acceptor.on_accept(b["group"], b["position"], b["ballot"], b["value"])
        self.net.reply(msg, "ACCEPT_OK" if r.ok else "ACCEPT_FAIL",
                       {"ballot": r.ballot, "promise": r.promise})

    def _on_apply(self, msg):
        b = msg.body
        self.apply(b["group"], b["position"], b["ballot"], b["value"])

    def apply(self, group, position, ballot, value) -> None:
        log = self.log(group)
        try:
            self.acceptor.on_apply(group, position, ballot, value, log)
        except ConflictingDecision as exc:
            logger.error("dc%d: %s", self.dc, exc)
            self.conflicts.append(exc)
            return
        if log.has_gap() and group not in self._gap_timer:
            # give in-flight APPLYs a chance before running instances for the gap
            self._gap_timer.add(group)
            self.net.sim.schedule(2 * self.net.topology.rtt_max() + 1.0, self._check_gap, group)

    def _check_gap(self, group):
        self._gap_timer.discard(group)
        log = self.log(group)
        if log.has_gap() and not self.net.is_down(self.dc):
            self.net.sim.spawn(self.ensure_applied(group, max(log.decided)), f"{self.name}-gap")

    # -- catch-up ---------------------------------------------------------

    def ensure_applied(self, group, up_to: int):
        """Catch up until the log is applied through ``up_to``; False if stuck."""
        log = self.log(group)
        while log.applied_through < up_to:
            proc = self._catchup.get(group)
            if proc is None or proc.done.triggered:
                proc = self.net.sim.spawn(self.catch_up(group, up_to), f"{self.name}-catchup")
                self._catchup[group] = proc
            yield proc.done
            if proc.result is False:
                return False
        return True

    def catch_up(self, group, up_to: int):
        """Run a Paxos instance proposing NOOP for every undecided position."""
        log = self.log(group)
        for position in log.missing(up_to):
            if position in log.decided:
                continue
            try:
                result = yield from self.proposer.run_instance(group, position, NOOP_ENTRY, BASIC)
            except Unavailable:
                logger.info("dc%d: catch-up of %r@%d unavailable", self.dc, group, position)
                return False
            if position not in log.decided:
                self.apply(group, position, result.ballot, result.chosen)
        return log.applied_through >= up_to
