"""Deterministic discrete-event simulation of datacenters and message passing.

Protocol activities are plain generators. They ``yield`` an :class:`Event`
and are resumed with the event's value once it fires, so a whole cluster of
concurrent clients and services runs on one logical timeline with no
wall-clock dependence. Every random draw comes from a seeded generator owned
by the :class:`Simulator`.
"""

from __future__ import annotations

import heapq
import itertools
import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Generator, Iterable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

#: Round-trip milliseconds between the regions used in the experiments.
REGION_RTT_MS = {
    ("V", "V"): 1.5,
    ("V", "O"): 90.0,
    ("V", "C"): 90.0,
    ("O", "C"): 20.0,
    ("O", "O"): 1.5,
    ("C", "C"): 1.5,
}

DEFAULT_TIMEOUT_MS = 2000.0


# ---------------------------------------------------------------------------
# topology


@dataclass
class Topology:
    rtt: np.ndarray
    jitter: float = 0.1
    loss: float = 0.0
    timeout_ms: float = DEFAULT_TIMEOUT_MS
    sites: str = ""

    def __post_init__(self):
        self.rtt = np.asarray(self.rtt, dtype=float)
        n = self.rtt.shape[0]
        if self.rtt.shape != (n, n) or n < 1:
            raise ValueError("rtt must be a square matrix")
        if not np.allclose(self.rtt, self.rtt.T) or np.any(np.diag(self.rtt) != 0):
            raise ValueError("rtt must be symmetric with a zero diagonal")
        if np.any(self.rtt < 0):
            raise ValueError("rtt entries must be non-negative")
        if not 0 <= self.loss < 1:
            raise ValueError("loss probability must be in [0, 1)")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter fraction must be in [0, 1)")
        if self.timeout_ms <= self.max_one_way():
            raise ValueError("timeout must exceed the largest one-way latency")

    @property
    def datacenters(self) -> int:
        return self.rtt.shape[0]

    @property
    def quorum(self) -> int:
        return self.datacenters // 2 + 1

    def one_way(self, src: int, dst: int) -> float:
        return float(self.rtt[src, dst]) / 2.0

    def max_one_way(self) -> float:
        return float(self.rtt.max()) / 2.0 * (1.0 + self.jitter)

    def rtt_max(self) -> float:
        return float(self.rtt.max())

    @classmethod
    def from_sites(cls, sites: str, **kw) -> "Topology":
        """Build a topology from region letters, e.g. ``"VVO"``."""
        n = len(sites)
        rtt = np.zeros((n, n))
        for i, j in itertools.combinations(range(n), 2):
            a, b = sites[i], sites[j]
            key = (a, b) if (a, b) in REGION_RTT_MS else (b, a)
            rtt[i, j] = rtt[j, i] = REGION_RTT_MS[key]
        return cls(rtt, sites=sites, **kw)

    def to_json(self) -> dict:
        return {"rtt": self.rtt.tolist(), "jitter": self.jitter, "loss": self.loss,
                "timeout_ms": self.timeout_ms, "sites": self.sites}


#: Named cluster layouts; ``replicas-N`` is the replica-count sweep.
PRESETS = {
    "VV": "VV",
    "VVV": "VVV",
    "OV": "OV",
    "COV": "COV",
    "VOC": "VOC",
    "replicas-2": "VV",
    "replicas-3": "VVV",
    "replicas-4": "VVVO",
    "replicas-5": "VVVOC",
}


def preset(name: str, **kw) -> Topology:
    try:
        sites = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown topology preset {name!r}; known: {sorted(PRESETS)}") from None
    return Topology.from_sites(sites, **kw)


def topology_from_config(cfg: dict) -> Topology:
    """``{"preset": "VVV"}`` or ``{"rtt": [[...]]}``, plus loss/jitter/timeout_ms."""
    kw = {k: cfg[k] for k in ("jitter", "loss", "timeout_ms") if k in cfg}
    if "preset" in cfg:
        return preset(cfg["preset"], **kw)
    if "sites" in cfg:
        return Topology.from_sites(cfg["sites"], **kw)
    if "rtt" in cfg:
        return Topology(np.array(cfg["rtt"], dtype=float), **kw)
    raise ValueError("topology config needs one of 'preset', 'sites' or 'rtt'")


@dataclass(frozen=True)
class OutageWindow:
    datacenter: int
    from_ms: float
    to_ms: float

    def __post_init__(self):
        if not self.from_ms < self.to_ms:
            raise ValueError("outage window must have from_ms < to_ms")

    def covers(self, dc: int, t: float) -> bool:
        return dc == self.datacenter and self.from_ms <= t < self.to_ms


# ---------------------------------------------------------------------------
# event kernel


class Event:
    __slots__ = ("sim", "triggered", "value", "_callbacks")

    def __init__(self, sim: "Simulator"):
        self.sim = sim
        self.triggered = False
        self.value = None
        self._callbacks: list = []

    def succeed(self, value=None) -> None:
        if self.triggered:
            return
        self.triggered = True
        self.value = value
        for cb in self._callbacks:
            self.sim.schedule(0.0, cb, self)
        self._callbacks = []

    def add_callback(self, cb) -> None:
        if self.triggered:
            self.sim.schedule(0.0, cb, self)
        else:
            self._callbacks.append(cb)


class Process:
    """Drives a generator that yields :class:`Event` objects."""

    def __init__(self, sim: "Simulator", gen: Generator, name: str = ""):
        self.sim = sim
        self.gen = gen
        self.name = name
        self.done = Event(sim)
        self.result: Any = None
        self.error: Optional[BaseException] = None
        sim.schedule(0.0, self._resume, None)

    def _resume(self, fired: Optional[Event]) -> None:
        value = None if fired is None else fired.value
        try:
            target = self.gen.send(value)
        except StopIteration as stop:
            self.result = stop.value
            self.done.succeed(self)
            return
        except Exception as exc:  # surfaced through ``done`` or re-raised by run()
            self.error = exc
            self.done.succeed(self)
            if not self.sim.tolerate_errors:
                raise
            return
        if not isinstance(target, Event):
            raise TypeError(f"process {self.name!r} yielded {target!r}, expected an Event")
        target.add_callback(self._resume)


class Simulator:
    def __init__(self, seed: int = 0):
        self.seed = seed
        self.now = 0.0
        self.rng = random.Random(seed)
        self._queue: list = []
        self._seq = itertools.count()
        self.tolerate_errors = False
        self.fired = 0

    def schedule(self, delay: float, fn: Callable, *args) -> None:
        if delay < 0:
            raise ValueError("cannot schedule into the past")
        heapq.heappush(self._queue, (self.now + delay, next(self._seq), fn, args))

    def event(self) -> Event:
        return Event(self)

    def timeout(self, delay: float, value=None) -> Event:
        ev = Event(self)
        self.schedule(delay, ev.succeed, value)
        return ev

    def spawn(self, gen: Generator, name: str = "") -> Process:
        return Process(self, gen, name)

    def run(self, until: Optional[float] = None,
            stop: Optional[Callable[[], bool]] = None) -> None:
        """Fire events in (time, insertion) order until ``stop()`` holds, the
        queue drains, or the next event is not strictly before ``until``."""
        while self._queue:
            t = self._queue[0][0]
            if until is not None and t >= until:
                self.now = max(self.now, until)
                return
            t, _, fn, args = heapq.heappop(self._queue)
            self.now = t
            self.fired += 1
            fn(*args)
            if stop is not None and stop():
                return
        if until is not None:
            self.now = max(self.now, until)

    def pending(self) -> int:
        return len(self._queue)


# ---------------------------------------------------------------------------
# network


@dataclass
class Message:
    kind: str
    body: dict
    src: str = ""
    dst: str = ""
    rid: Optional[int] = None


@dataclass
class Node:
    name: str
    dc: int
    handler: Optional[Callable[[Message], None]] = None
    is_service: bool = False
    pending: dict = field(default_factory=dict)


#: message kinds that belong to a Paxos instance
INSTANCE_KINDS = ("PREPARE", "ACCEPT", "APPLY")


def instance_message_counts(traffic) -> Counter:
    """Requests sent per (proposer, position, ballot, kind) for instance kinds."""
    return Counter((rec[4], rec[5], rec[6], rec[3]) for rec in traffic
                   if rec[3] in INSTANCE_KINDS)


class Network:
    """Latency, loss, timeout and whole-datacenter outages between nodes."""

    def __init__(self, sim: Simulator, topology: Topology,
                 outages: Sequence[OutageWindow] = ()):
        self.sim = sim
        self.topology = topology
        self.outages = list(outages)
        self.nodes: dict[str, Node] = {}
        self.traffic: list[tuple] = []
        self._rids = itertools.count(1)
        self.sent = 0
        self.dropped = 0

    def register(self, name: str, dc: int, handler=None, is_service=False) -> Node:
        if name in self.nodes:
            raise ValueError(f"duplicate node {name!r}")
        if not 0 <= dc < self.topology.datacenters:
            raise ValueError(f"datacenter {dc} outside topology")
        node = Node(name, dc, handler, is_service)
        self.nodes[name] = node
        return node

    def service_name(self, dc: int) -> str:
        return f"dc{dc}"

    def is_down(self, dc: int, t: Optional[float] = None) -> bool:
        t = self.sim.now if t is None else t
        return any(o.covers(dc, t) for o in self.outages)

    def node_down(self, node: Node, t: Optional[float] = None) -> bool:
        return node.is_service and self.is_down(node.dc, t)

    def send(self, src: str, dst: str, msg: Message) -> None:
        s, d = self.nodes[src], self.nodes[dst]
        msg.src, msg.dst = src, dst
        self.sent += 1
        b = msg.body
        self.traffic.append((round(self.sim.now, 6), src, dst, msg.kind, b.get("proposer"),
                             b.get("position"), _ballot_key(b.get("ballot"))))
        if self.node_down(s):
            self.dropped += 1
            return
        if s.dc == d.dc:
            delay = 0.0
        else:
            if self.sim.rng.random() < self.topology.loss:
                self.dropped += 1
                return
            base = self.topology.one_way(s.dc, d.dc)
            j = self.topology.jitter
            delay = base * (1.0 + self.sim.rng.uniform(-j, j))
        self.sim.schedule(delay, self._deliver, d, msg)

    def _deliver(self, node: Node, msg: Message) -> None:
        if self.node_down(node):
            self.dropped += 1
            return
        if msg.kind.endswith(("_OK", "_FAIL")):
            # replies arriving after their gather closed are stale
            if msg.rid in node.pending:
                node.pending[msg.rid](msg)
            return
        if node.handler is not None:
            node.handler(msg)

    def reply(self, request: Message, kind: str, body: dict) -> None:
        self.send(request.dst, request.src, Message(kind, body, rid=request.rid))

    def gather(self, src: str, requests: Iterable[tuple[str, Message]],
               timeout: Optional[float] = None,
               enough: Optional[Callable[[list], bool]] = None) -> Event:
        """Send requests concurrently; fire with the replies received in time.

        The result event fires when every request was answered, when
        ``enough(replies)`` holds, or when the timeout expires, whichever is
        first. A reply delivered exactly at the deadline is excluded: the
        deadline timer is queued before any reply can be.
        """
        node = self.nodes[src]
        requests = list(requests)
        result = self.sim.event()
        replies: list[Message] = []
        rids: list[int] = []
        timeout = self.topology.timeout_ms if timeout is None else timeout

        def finish(_=None):
            if result.triggered:
                return
            for rid in rids:
                node.pending.pop(rid, None)
            result.succeed(list(replies))

        self.sim.schedule(timeout, finish)

        def on_reply(msg: Message):
            if result.triggered:
                return
            node.pending.pop(msg.rid, None)
            replies.append(msg)
            if len(replies) == len(requests) or (enough is not None and enough(replies)):
                finish()

        for dst, msg in requests:
            msg.rid = next(self._rids)
            rids.append(msg.rid)
            node.pending[msg.rid] = on_reply
        for dst, msg in requests:
            self.send(src, dst, msg)
        if not requests:
            finish()
        return result

    def await_quorum(self, src: str, requests, needed: int, timeout: Optional[float] = None) -> Event:
        """Gather replies; the caller checks whether ``needed`` of them succeeded."""
        if needed > len(requests):
            raise ValueError("needed exceeds the number of requests")
        return self.gather(src, requests, timeout)


def _ballot_key(ballot):
    if ballot is None:
        return None
    return (ballot[0], ballot[1])


def load_config(path: str | Path) -> dict:
    """Read a JSON configuration file (topology, outages, workload, seed)."""
    with open(path) as fh:
        return json.load(fh)


def outages_from_config(items: Iterable[dict]) -> list[OutageWindow]:
    return [OutageWindow(int(o["datacenter"]), float(o["from_ms"]), float(o["to_ms"]))
            for o in items]
