"""YCSB-style transactional workload over one entity group.

The item universe is the attributes of a single row; each attribute is its
own versioned data item, so two transactions conflict only when they touch
the same attribute. Every written value is unique (tagged with the writer's
transaction id and op index), which lets the checker match reads by value.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import random
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .checker import HistoryTrace, Verdict, check
from .cluster import Cluster
from .proposer import BASIC, CP, ProtocolConfig, Unavailable
from .simnet import OutageWindow, Topology
from .txn import COMMITTED, UNAVAILABLE

logger = logging.getLogger(__name__)

GROUP = "row"
ROUND_COLUMNS = 8  # r0..r6 plus an r7+ bucket


@dataclass
class WorkloadConfig:
    total_txns: int = 500
    ops_per_txn: int = 10
    read_fraction: float = 0.5
    total_attributes: int = 100
    clients: int = 4
    stagger_ms: float = 250.0
    # mean gap between one transaction finishing and the client's next one
    interval_ms: float = 1000.0
    # think time before each operation, scaled by U(0.5, 1.5)
    op_delay_ms: float = 22.0
    client_dcs: Optional[list] = None
    protocol: str = CP
    promotion_cap: Optional[int] = None
    fast_path: bool = True
    mutations: tuple = ()

    def __post_init__(self):
        self.protocol = self.protocol.upper()
        if self.protocol not in (BASIC, CP):
            raise ValueError(f"protocol must be BASIC or CP, not {self.protocol!r}")
        if not 0.0 <= self.read_fraction <= 1.0:
            raise ValueError("read_fraction must be in [0, 1]")
        for name in ("total_txns", "ops_per_txn", "total_attributes", "clients"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.stagger_ms < 0 or self.interval_ms < 0 or self.op_delay_ms < 0:
            raise ValueError("times must be non-negative")
        if self.promotion_cap is not None and self.promotion_cap < 0:
            raise ValueError("promotion_cap must be non-negative")
        if self.client_dcs is not None and len(self.client_dcs) != self.clients:
            raise ValueError("client_dcs needs one datacenter per client")
        self.mutations = tuple(self.mutations)

    def protocol_config(self) -> ProtocolConfig:
        return ProtocolConfig(mode=self.protocol, fast_path=self.fast_path,
                              promotion_cap=self.promotion_cap,
                              mutations=frozenset(self.mutations))

    def to_json(self) -> dict:
        d = asdict(self)
        d["mutations"] = list(self.mutations)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "WorkloadConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown workload fields: {sorted(unknown)}")
        return cls(**d)


def attribute(i: int) -> str:
    return f"a{i:03d}"


def generate_txn(config: WorkloadConfig, rng: random.Random, tag: str) -> list:
    """A scripted transaction: ``[("r", key) | ("w", key, value), ...]``."""
    ops = []
    for i in range(config.ops_per_txn):
        key = attribute(rng.randrange(config.total_attributes))
        if rng.random() < config.read_fraction:
            ops.append(("r", key))
        else:
            ops.append(("w", key, {"v": f"{tag}.{i}"}))
    return ops


@dataclass
class RunMetrics:
    protocol: str
    datacenters: int
    attributes: int
    clients: int
    issued: int = 0
    commits_by_round: dict = field(default_factory=dict)
    aborts: int = 0
    unavailable: int = 0
    read_only_commits: int = 0
    combinations: int = 0
    latency_ms: list = field(default_factory=list)
    per_client: dict = field(default_factory=dict)
    duration_ms: float = 0.0
    trace_digest: str = ""

    @property
    def commits(self) -> int:
        return sum(self.commits_by_round.values())

    @property
    def commit_rate(self) -> float:
        return self.commits / self.issued if self.issued else 1.0

    @property
    def promotions(self) -> int:
        return sum(n for r, n in self.commits_by_round.items() if r > 0)

    def histogram(self) -> list:
        """Commits per promotion round, last bucket holding rounds >= 7."""
        h = [0] * ROUND_COLUMNS
        for r, n in self.commits_by_round.items():
            h[min(r, ROUND_COLUMNS - 1)] += n
        return h

    def latency_summary(self) -> dict:
        if not self.latency_ms:
            return {"mean": 0.0, "median": 0.0, "p99": 0.0}
        a = np.asarray(self.latency_ms)
        return {"mean": round(float(a.mean()), 3), "median": round(float(np.median(a)), 3),
                "p99": round(float(np.percentile(a, 99)), 3)}

    def to_json(self) -> dict:
        d = asdict(self)
        d["commits_by_round"] = {str(r): n for r, n in sorted(self.commits_by_round.items())}
        d["per_client"] = {str(c): v for c, v in sorted(self.per_client.items())}
        d["commits"] = self.commits
        d["latency"] = self.latency_summary()
        return d

    def csv_row(self) -> dict:
        row = {"protocol": self.protocol, "D": self.datacenters, "attrs": self.attributes,
               "clients": self.clients, "issued": self.issued, "commits": self.commits}
        for r, n in enumerate(self.histogram()):
            row[f"commits_r{r}" + ("+" if r == ROUND_COLUMNS - 1 else "")] = n
        row.update(aborts=self.aborts, unavailable=self.unavailable,
                   combinations=self.combinations)
        lat = self.latency_summary()
        row.update(latency_mean=lat["mean"], latency_median=lat["median"],
                   latency_p99=lat["p99"])
        return row


def csv_text(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return out.getvalue()


class SafetyViolation(Exception):
    """The checker rejected a run's history."""

    def __init__(self, verdict: Verdict, trace: HistoryTrace):
        first = verdict.violations[0]
        super().__init__(f"{len(verdict.violations)} violation(s); first: [{first[0]}] {first[1]}")
        self.verdict = verdict
        self.trace = trace


def _client_process(cluster: Cluster, client, cfg: WorkloadConfig, share: int,
                    rng: random.Random, start_ms: float, tally: dict):
    sim = cluster.sim
    yield sim.timeout(start_ms)
    for n in range(share):
        script = generate_txn(cfg, rng, f"c{client.client_id}.t{n + 1}")
        try:
            txn = yield from client.begin(GROUP)
        except Unavailable:
            tally["begin_unavailable"] += 1
            continue
        try:
            for op in script:
                yield sim.timeout(cfg.op_delay_ms * rng.uniform(0.5, 1.5))
                if op[0] == "r":
                    yield from client.read(txn, op[1])
                else:
                    client.write(txn, op[1], op[2])
            yield from client.commit(txn)
        except Unavailable:
            if txn.status != UNAVAILABLE:
                txn.status = UNAVAILABLE
                txn.end_ms = sim.now
                client.active.pop(txn.group, None)
        if cfg.interval_ms > 0:
            yield sim.timeout(rng.expovariate(1.0 / cfg.interval_ms))


def build_cluster(topology: Topology, cfg: WorkloadConfig, seed: int,
                  outages: Sequence[OutageWindow] = ()) -> Cluster:
    cluster = Cluster(topology, cfg.protocol_config(), seed=seed, outages=outages)
    dcs = cfg.client_dcs or [0] * cfg.clients
    for dc in dcs:
        if not 0 <= dc < topology.datacenters:
            raise ValueError(f"client datacenter {dc} outside 0..{topology.datacenters - 1}")
        cluster.add_client(dc)
    return cluster


def run_experiment(topology: Topology, cfg: WorkloadConfig, seed: int = 0,
                   outages: Sequence[OutageWindow] = (), verify: bool = True,
                   cluster_out: Optional[list] = None):
    """Run one seeded experiment; return ``(RunMetrics, HistoryTrace)``.

    With ``verify`` the trace is checked before metrics are computed and a
    :class:`SafetyViolation` is raised on any violation.
    """
    cluster = build_cluster(topology, cfg, seed, outages)
    tally = {"begin_unavailable": 0}
    base, extra = divmod(cfg.total_txns, cfg.clients)
    for i, client in enumerate(cluster.clients):
        share = base + (1 if i < extra else 0)
        rng = random.Random(f"workload:{seed}:{i}")
        cluster.sim.spawn(_client_process(cluster, client, cfg, share, rng,
                                          i * cfg.stagger_ms, tally), client.name)
    cluster.run()
    if cluster_out is not None:
        cluster_out.append(cluster)
    trace = cluster.trace()
    if verify:
        verdict = check(trace)
        for w in cluster.window_violations:
            verdict.add("R1", "combined while a value already held a majority below the ballot", w)
        if not verdict.ok:
            raise SafetyViolation(verdict, trace)
    metrics = collect_metrics(cluster, cfg, trace)
    metrics.unavailable += tally["begin_unavailable"]
    metrics.issued += tally["begin_unavailable"]
    return metrics, trace


def collect_metrics(cluster: Cluster, cfg: WorkloadConfig, trace: HistoryTrace) -> RunMetrics:
    m = RunMetrics(cfg.protocol, cluster.topology.datacenters, cfg.total_attributes, cfg.clients)
    for t in trace.transactions:
        c = m.per_client.setdefault(t.txn_id[0], {"commits": 0, "aborts": 0,
                                                 "unavailable": 0, "read_only": 0})
        if not t.writes:
            if t.status == COMMITTED:
                m.read_only_commits += 1
                c["read_only"] += 1
            else:
                # stopped before its first write; still an issued attempt
                m.issued += 1
                m.unavailable += 1
                c["unavailable"] += 1
            continue
        m.issued += 1
        if t.status == COMMITTED:
            m.commits_by_round[t.promotions] = m.commits_by_round.get(t.promotions, 0) + 1
            m.latency_ms.append(round(t.end_ms - t.begin_ms, 6))
            c["commits"] += 1
        elif t.status == UNAVAILABLE:
            m.unavailable += 1
            c["unavailable"] += 1
        else:
            m.aborts += 1
            c["aborts"] += 1
    # combined entries are the same at every replica; count them once
    seen = {}
    for dc_logs in trace.logs.values():
        for group, positions in dc_logs.items():
            for pos, (_kind, ids) in positions.items():
                seen[(group, pos)] = len(ids)
    m.combinations = sum(1 for n in seen.values() if n > 1)
    m.duration_ms = round(cluster.sim.now, 6)
    m.trace_digest = cluster.digest()
    return m


def metrics_json(metrics: RunMetrics) -> str:
    return json.dumps(metrics.to_json(), sort_keys=True, indent=2)
