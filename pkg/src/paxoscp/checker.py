"""Executable one-copy-serializability verification of a run's history.

A :class:`HistoryTrace` holds every transaction a client ran (with each
operation and the value it observed) and every datacenter's decided log.
From it the checker builds the serial order that the correctness argument
prescribes (log positions in order, list order within a combined entry,
read-only transactions right after the position they read from) and replays
it against a single-copy store. A brute-force search over all serial orders
cross-checks the constructive verdict on small histories.

Observed reads are compared by value; the workload writes globally unique
values, so value equality coincides with reads-from equality.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional

TAGS = ("R1", "L1", "L2", "L3", "A1", "A2", "1SR")

COMMITTED = "COMMITTED"
ABORTED = "ABORTED"


class MissingEntry(Exception):
    """A committed read/write transaction is in no log."""


class TooLarge(Exception):
    """Too many transactions for exhaustive search."""


@dataclass
class TxnTrace:
    txn_id: tuple
    group: Hashable
    read_position: int
    ops: list
    status: str
    origin: int = 0
    position: Optional[int] = None
    promotions: int = 0
    combined: bool = False
    begin_ms: float = 0.0
    end_ms: Optional[float] = None

    @property
    def writes(self) -> bool:
        return any(op[0] == "w" for op in self.ops)

    def to_json(self) -> dict:
        return {"record": "txn", "txn_id": list(self.txn_id), "group": self.group,
                "origin": self.origin, "read_position": self.read_position,
                "ops": [list(op) for op in self.ops], "status": self.status,
                "position": self.position, "promotions": self.promotions,
                "combined": self.combined, "begin_ms": self.begin_ms, "end_ms": self.end_ms}

    @classmethod
    def from_json(cls, d: dict) -> "TxnTrace":
        return cls(txn_id=tuple(d["txn_id"]), group=d["group"], origin=d.get("origin", 0),
                   read_position=d["read_position"], ops=[tuple(op) for op in d["ops"]],
                   status=d["status"], position=d.get("position"),
                   promotions=d.get("promotions", 0), combined=d.get("combined", False),
                   begin_ms=d.get("begin_ms", 0.0), end_ms=d.get("end_ms"))


@dataclass
class HistoryTrace:
    transactions: list
    # dc -> group -> position -> (kind, [txn ids])
    logs: dict
    final_states: dict = field(default_factory=dict)
    conflicts: list = field(default_factory=list)

    def txn_map(self) -> dict:
        return {t.txn_id: t for t in self.transactions}

    def to_records(self) -> Iterable[dict]:
        for t in self.transactions:
            yield t.to_json()
        for dc in sorted(self.logs):
            for group in sorted(self.logs[dc], key=repr):
                for pos in sorted(self.logs[dc][group]):
                    kind, ids = self.logs[dc][group][pos]
                    yield {"record": "log", "dc": dc, "group": group, "position": pos,
                           "kind": kind, "txns": [list(i) for i in ids]}
        for dc in sorted(self.final_states):
            for group, st in sorted(self.final_states[dc].items(), key=lambda kv: repr(kv[0])):
                yield {"record": "state", "dc": dc, "group": group,
                       "applied_through": st["applied_through"], "values": st["values"]}
        for c in self.conflicts:
            yield {"record": "conflict", **c}

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.to_records())

    @classmethod
    def from_jsonl(cls, text: str) -> "HistoryTrace":
        txns, logs, final, conflicts = [], {}, {}, []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                kind = rec["record"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"line {lineno}: not a trace record ({exc})") from None
            if kind == "txn":
                txns.append(TxnTrace.from_json(rec))
            elif kind == "log":
                logs.setdefault(rec["dc"], {}).setdefault(rec["group"], {})[rec["position"]] = (
                    rec["kind"], [tuple(i) for i in rec["txns"]])
            elif kind == "state":
                final.setdefault(rec["dc"], {})[rec["group"]] = {
                    "applied_through": rec["applied_through"], "values": rec["values"]}
            elif kind == "conflict":
                conflicts.append({k: v for k, v in rec.items() if k != "record"})
            else:
                raise ValueError(f"line {lineno}: unknown record type {kind!r}")
        return cls(txns, logs, final, conflicts)


@dataclass
class Verdict:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, tag: str, description: str, witness=None) -> None:
        assert tag in TAGS, tag
        self.violations.append((tag, description, witness))

    def extend(self, other: "Verdict") -> "Verdict":
        self.violations.extend(other.violations)
        return self

    def tags(self) -> set:
        return {v[0] for v in self.violations}

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": [
            {"property": t, "description": d, "witness": _jsonable(w)}
            for t, d, w in self.violations]}


def _jsonable(w):
    return json.loads(json.dumps(w, default=repr))


# ---------------------------------------------------------------------------
# replication


def check_replication(trace: HistoryTrace) -> Verdict:
    v = Verdict()
    seen: dict = {}
    for dc in sorted(trace.logs):
        for group, positions in trace.logs[dc].items():
            for pos, (kind, ids) in positions.items():
                entry = (kind, [tuple(i) for i in ids])
                prev = seen.setdefault((group, pos), (dc, entry))
                if prev[1] != entry:
                    v.add("R1", f"group {group!r} position {pos}: dc{prev[0]} and dc{dc} differ",
                          {"position": pos, "dcs": [prev[0], dc], "entries": [prev[1], entry]})
    for c in trace.conflicts:
        v.add("R1", f"dc{c['dc']} was asked to apply a second value at position {c['position']}",
              c)
    return v


def merged_log(trace: HistoryTrace) -> dict:
    """group -> position -> list of txn ids, over all replicas (assumes R1)."""
    merged: dict = {}
    for dc in sorted(trace.logs):
        for group, positions in trace.logs[dc].items():
            g = merged.setdefault(group, {})
            for pos, (kind, ids) in positions.items():
                g.setdefault(pos, [tuple(i) for i in ids] if kind != "NOOP" else [])
    return merged


def _committed(trace: HistoryTrace, logged: set) -> list:
    """Transactions that count as committed: reported so, or found in a log."""
    out = []
    for t in trace.transactions:
        if t.status == COMMITTED or (t.status != ABORTED and t.txn_id in logged):
            out.append(t)
    return out


def _logged_ids(merged: dict) -> set:
    return {i for g in merged.values() for ids in g.values() for i in ids}


# ---------------------------------------------------------------------------
# constructive serial history


def build_serial_history(trace: HistoryTrace) -> list:
    merged = merged_log(trace)
    logged = _logged_ids(merged)
    committed = _committed(trace, logged)
    for t in committed:
        if t.writes and t.txn_id not in logged:
            raise MissingEntry(f"committed transaction {t.txn_id} is in no log")
    read_only: dict = {}
    for t in committed:
        if not t.writes and t.txn_id not in logged:
            read_only.setdefault((t.group, t.read_position), []).append(t.txn_id)
    order = []
    groups = sorted({t.group for t in committed} | set(merged), key=repr)
    for group in groups:
        positions = merged.get(group, {})
        last = max(positions, default=0)
        ro_positions = [p for (g, p) in read_only if g == group]
        last = max([last, *ro_positions])
        for pos in range(0, last + 1):
            order.extend(positions.get(pos, []))
            order.extend(sorted(read_only.get((group, pos), [])))
    return order


def _replay_txn(t: TxnTrace, state: dict, v: Verdict, tag: str, context: str,
                own_checks: bool = True) -> dict:
    """Check one transaction's reads against ``state``; return its writes."""
    overlay: dict = {}
    for op in t.ops:
        kind, key, value = op[0], op[1], op[2]
        own = op[3] if len(op) > 3 else False
        k = (t.group, key)
        if kind == "w":
            overlay[k] = value
            continue
        if k in overlay:
            if own_checks and (not own or value != overlay[k]):
                v.add("A1", f"{t.txn_id} read {key!r} without seeing its own write",
                      {"txn": t.txn_id, "key": key, "observed": value, "own": overlay[k]})
            continue
        if own:
            if own_checks:
                v.add("A1", f"{t.txn_id} claims an own read of unwritten {key!r}",
                      {"txn": t.txn_id, "key": key})
            continue
        expected = state.get(k)
        if value != expected:
            v.add(tag, f"{t.txn_id} read {key!r}={value!r}, {context} gives {expected!r}",
                  {"txn": t.txn_id, "key": key, "observed": value, "expected": expected})
    return overlay


def verify_serial(trace: HistoryTrace, order: list) -> Verdict:
    v = Verdict()
    txns = trace.txn_map()
    merged = merged_log(trace)
    logged = _logged_ids(merged)
    committed = _committed(trace, logged)
    committed_ids = {t.txn_id for t in committed}

    # log contents: only committed transactions, each in exactly one position
    where: dict = {}
    for group, positions in merged.items():
        for pos, ids in positions.items():
            for i in ids:
                t = txns.get(i)
                if t is None or t.status == ABORTED or t.status == "ACTIVE":
                    v.add("L1", f"log position {pos} holds {i}, which did not commit",
                          {"position": pos, "txn": i})
                where.setdefault(i, []).append(pos)
    for i, positions in where.items():
        if len(positions) > 1:
            v.add("L2", f"{i} appears at several log positions", {"txn": i, "positions": positions})
    for t in committed:
        if t.writes and t.txn_id not in logged:
            v.add("L2", f"committed {t.txn_id} is missing from every log", {"txn": t.txn_id})
        elif t.writes and t.position is not None and where.get(t.txn_id, [t.position])[0] != t.position:
            v.add("L2", f"{t.txn_id} reported position {t.position}, log has "
                  f"{where[t.txn_id][0]}", {"txn": t.txn_id})

    # same operations as the serial history
    counts: dict = {}
    for i in order:
        counts[i] = counts.get(i, 0) + 1
    for i, n in counts.items():
        if n != 1 or i not in committed_ids:
            v.add("1SR", f"{i} occurs {n} times in the serial order", {"txn": i})
    for i in committed_ids - set(counts):
        v.add("1SR", f"committed {i} is absent from the serial order", {"txn": i})

    # same reads-from: replay the serial order on one copy
    state: dict = {}
    for i in order:
        t = txns.get(i)
        if t is None:
            continue
        state.update(_replay_txn(t, state, v, "1SR", "the serial history"))

    # every log prefix is itself serializable (log-only replay)
    for group, positions in merged.items():
        state = {}
        for pos in sorted(positions):
            for i in positions[pos]:
                t = txns.get(i)
                if t is not None:
                    state.update(_replay_txn(t, state, v, "L3",
                                             f"log prefix before position {pos}",
                                             own_checks=False))

    # external reads all come from the read position's prefix
    for group, positions in merged.items():
        members = sorted((t for t in committed if t.group == group),
                         key=lambda t: t.read_position)
        state, applied = {}, 0
        for t in members:
            while applied < t.read_position:
                applied += 1
                for i in positions.get(applied, []):
                    if i in txns:
                        for op in txns[i].ops:
                            if op[0] == "w":
                                state[(group, op[1])] = op[2]
            for op in t.ops:
                if op[0] == "r" and not (len(op) > 3 and op[3]):
                    expected = state.get((group, op[1]))
                    if op[2] != expected:
                        v.add("A2", f"{t.txn_id} read {op[1]!r} not from read position "
                              f"{t.read_position}", {"txn": t.txn_id, "key": op[1],
                                                     "observed": op[2], "expected": expected})

    # replicated store contents match a replay of the same log prefix
    for dc, groups in trace.final_states.items():
        for group, st in groups.items():
            state = {}
            positions = merged.get(group, {})
            for pos in range(1, st["applied_through"] + 1):
                for i in positions.get(pos, []):
                    for op in txns[i].ops if i in txns else ():
                        if op[0] == "w":
                            state[op[1]] = op[2]
            for key, value in st["values"].items():
                if state.get(key) != value:
                    v.add("1SR", f"dc{dc} final state of {key!r} differs from the log replay",
                          {"dc": dc, "key": key, "store": value, "replay": state.get(key)})
    return v


def check(trace: HistoryTrace) -> Verdict:
    """Replication check, then the constructive serial-history check."""
    v = check_replication(trace)
    if not v.ok:
        return v
    try:
        order = build_serial_history(trace)
    except MissingEntry as exc:
        v.add("L2", str(exc))
        order = [i for i in _fallback_order(trace)]
    return v.extend(verify_serial(trace, order))


def _fallback_order(trace):
    merged = merged_log(trace)
    for group in sorted(merged, key=repr):
        for pos in sorted(merged[group]):
            yield from merged[group][pos]


# ---------------------------------------------------------------------------
# brute-force oracle


def brute_force_oracle(trace: HistoryTrace, bound: int = 8) -> Verdict:
    """Search every serial order of the committed transactions for one whose
    single-copy replay reproduces every observed read."""
    merged = merged_log(trace)
    committed = _committed(trace, _logged_ids(merged))
    if len(committed) > bound:
        raise TooLarge(f"{len(committed)} committed transactions exceed the bound of {bound}")
    for perm in itertools.permutations(committed):
        state: dict = {}
        good = True
        for t in perm:
            local = dict(state)
            for op in t.ops:
                k = (t.group, op[1])
                if op[0] == "w":
                    local[k] = op[2]
                elif local.get(k) != op[2]:
                    good = False
                    break
            if not good:
                break
            state = local
        if good:
            return Verdict()
    v = Verdict()
    v.add("1SR", "no serial order of the committed transactions reproduces the reads",
          {"txns": [t.txn_id for t in committed]})
    return v
