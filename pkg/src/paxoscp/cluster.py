"""A simulated multi-datacenter deployment: services, clients and the network."""

from __future__ import annotations

import hashlib
import json
from typing import Iterable, Optional, Sequence

from .acceptor import Ballot
from .checker import HistoryTrace, TxnTrace
from .datacenter import TransactionService
from .mvstore import UNSET
from .proposer import ProtocolConfig, quorum
from .simnet import Network, OutageWindow, Simulator, Topology
from .txn import TransactionClient


class Cluster:
    def __init__(self, topology: Topology, config: Optional[ProtocolConfig] = None,
                 seed: int = 0, outages: Sequence[OutageWindow] = (),
                 catalog: Optional[dict] = None):
        self.topology = topology
        self.config = config or ProtocolConfig()
        self.sim = Simulator(seed)
        self.net = Network(self.sim, topology, outages)
        self.services = [TransactionService(self.net, dc, self.config)
                         for dc in range(topology.datacenters)]
        self.clients: list[TransactionClient] = []
        self.catalog = catalog
        self.window_violations: list[dict] = []
        self.combine_checks = 0

    def add_client(self, dc: int = 0, config: Optional[ProtocolConfig] = None) -> TransactionClient:
        cid = len(self.clients)
        client = TransactionClient(self.net, cid, dc, pid=self.topology.datacenters + cid,
                                   config=config or self.config, catalog=self.catalog,
                                   on_combine=self._check_window)
        self.clients.append(client)
        return client

    def call(self, gen, until: Optional[float] = None):
        """Run one generator to completion on the simulation timeline."""
        proc = self.sim.spawn(_capture(gen))
        self.sim.run(until=until, stop=lambda: proc.done.triggered)
        if not proc.done.triggered:
            raise RuntimeError("simulation went quiet before the call finished")
        ok, value = proc.result
        if not ok:
            raise value
        return value

    def run(self, until: Optional[float] = None) -> None:
        self.sim.run(until)

    def _check_window(self, group, position, ballot: Ballot, promised, value) -> None:
        """Omniscient check that combining was safe: no value holds a majority
        of votes cast below the combining ballot."""
        self.combine_checks += 1
        votes = []
        for svc in self.services:
            cell = svc.acceptor.cell(group, position)
            if cell.value is not None and cell.ballot_number < ballot:
                votes.append(cell.value)
        m = quorum(self.topology.datacenters)
        for v in votes:
            if sum(1 for w in votes if w == v) >= m:
                self.window_violations.append({"group": group, "position": position,
                                               "ballot": list(ballot), "txns": v.txn_ids()})
                return

    # -- observation ------------------------------------------------------

    def trace(self) -> HistoryTrace:
        txns = []
        for client in self.clients:
            for t in client.history:
                o = t.outcome
                txns.append(TxnTrace(
                    txn_id=t.txn_id, group=t.group, origin=t.origin,
                    read_position=t.read_position, ops=list(t.ops), status=t.status,
                    position=None if o is None else o.final_position,
                    promotions=0 if o is None else o.promotions,
                    combined=False if o is None else o.combined,
                    begin_ms=t.begin_ms, end_ms=t.end_ms))
        logs = {}
        for svc in self.services:
            logs[svc.dc] = {g: {p: (e.kind, [tuple(i) for i in e.txn_ids()])
                                for p, e in log.decided.items()}
                            for g, log in svc.logs.items()}
        final = {}
        for svc in self.services:
            final[svc.dc] = {}
            for g, log in svc.logs.items():
                keys = {k[2] for k in svc.store.keys() if k[0] == "data" and k[1] == g}
                final[svc.dc][g] = {"applied_through": log.applied_through,
                                    "values": {k: _plain(log.read(k, log.applied_through))
                                               for k in sorted(keys, key=repr)}}
        conflicts = [{"dc": svc.dc, "group": c.group, "position": c.position,
                      "existing": [list(i) for i in c.existing.txn_ids()],
                      "incoming": [list(i) for i in c.incoming.txn_ids()]}
                     for svc in self.services for c in svc.conflicts]
        return HistoryTrace(transactions=txns, logs=logs, final_states=final,
                            conflicts=conflicts)

    def instance_trace(self) -> list[dict]:
        records = []
        for c in self.clients:
            records.extend(c.proposer.trace)
        for s in self.services:
            records.extend(s.proposer.trace)
        return sorted(records, key=lambda r: (r["t"], r["proposer"]))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.trace().to_jsonl().encode())
        for rec in self.net.traffic:
            h.update(repr(rec).encode())
        return h.hexdigest()


def _capture(gen):
    try:
        value = yield from gen
    except Exception as exc:  # handed back to Cluster.call
        return False, exc
    return True, value


def _plain(value):
    return None if value is UNSET else dict(value)
