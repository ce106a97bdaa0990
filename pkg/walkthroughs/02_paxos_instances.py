"""Single Paxos instances: the fast path, racing proposers, and Paxos-CP decisions.

Run with ``python walkthroughs/02_paxos_instances.py``.
"""

# %% Three datacenters in one region; two clients race for log position 1.
from paxoscp import Ballot, Cluster, LogEntry, ProtocolConfig, TxnRecord, UNSET, preset
from paxoscp.proposer import VoteResponse, decide_cp

def txn(cid, writes, reads=()):
    return TxnRecord((cid, 1), "row", 0, tuple((k, UNSET) for k in reads),
                     tuple((k, {"v": f"c{cid}.{k}"}) for k in writes))


cluster = Cluster(preset("VVV"), ProtocolConfig(mode="BASIC", fast_path=False), seed=4)
p, q = cluster.add_client(0), cluster.add_client(1)
results = {}


def propose(client, value, name):
    results[name] = yield from client.proposer.run_instance("row", 1, value)


cluster.sim.spawn(propose(p, LogEntry.of(txn(0, ["x"])), "p"))
cluster.sim.spawn(propose(q, LogEntry.of(txn(1, ["y"])), "q"))
cluster.run()
for name, res in results.items():
    print(name, "won" if res.own_won else "lost", "- chosen:", res.chosen.txn_ids())

# %% The first client at a position may skip PREPARE and ACCEPT at the zero ballot.
fast = Cluster(preset("VVV"), ProtocolConfig(), seed=0)
c = fast.add_client(0)
print("register:", fast.call(c.proposer.register("row", 1, 0)))
res = fast.call(c.proposer.run_instance("row", 1, LogEntry.of(txn(5, ["z"])), fast=True))
print("fast path ballot:", res.ballot, "phases:", [r["phase"] for r in c.proposer.trace])

# %% Paxos-CP looks at the votes in a PREPARE round before picking a value.
own = LogEntry.of(txn(9, ["w"], reads=["r"]))
a, b = LogEntry.of(txn(1, ["x"])), LogEntry.of(txn(2, ["y"]))
split = [VoteResponse(0, True, Ballot(1, 3), a), VoteResponse(1, True, Ballot(1, 4), b),
         VoteResponse(2, True)]
print("split votes ->", decide_cp(split, own, 3)[0], decide_cp(split, own, 3)[1].txn_ids())
chosen = [VoteResponse(0, True, Ballot(1, 3), a), VoteResponse(1, True, Ballot(1, 3), a),
          VoteResponse(2, True)]
print("majority for one value ->", decide_cp(chosen, own, 3)[0])
