"""Transactions end to end: read position, buffered writes, commit, promotion.

Run with ``python walkthroughs/03_transactions.py``.
"""

# %% A client reads from the log prefix it began at, buffers writes, and commits.
from paxoscp import Cluster, ProtocolConfig, check, preset

cluster = Cluster(preset("VOC"), ProtocolConfig(mode="CP"), seed=1)
alice, bob = cluster.add_client(0), cluster.add_client(0)

t = cluster.call(alice.begin("row"))
print("read position", t.read_position, "x =", cluster.call(alice.read(t, "x")))
alice.write(t, "y", {"v": "alice"})

# %% Bob commits twice while Alice is still open; both land before her target position.
for n in range(2):
    u = cluster.call(bob.begin("row"))
    bob.write(u, f"b{n}", {"v": f"bob{n}"})
    print("bob", n, cluster.call(bob.commit(u)))

# %% Alice's read of x does not overlap Bob's writes, so Paxos-CP promotes her twice.
out = cluster.call(alice.commit(t))
print("alice", out)

# %% Under basic Paxos the same interleaving aborts Alice.
basic = Cluster(preset("VOC"), ProtocolConfig(mode="BASIC"), seed=1)
a2, b2 = basic.add_client(0), basic.add_client(0)
t2 = basic.call(a2.begin("row"))
basic.call(a2.read(t2, "x"))
a2.write(t2, "y", {"v": "alice"})
u2 = basic.call(b2.begin("row"))
b2.write(u2, "b0", {"v": "bob0"})
basic.call(b2.commit(u2))
print("alice under BASIC:", basic.call(a2.commit(t2)).decision)

# %% Every run's history can be checked for one-copy serializability.
cluster.run()
print("checker:", check(cluster.trace()).ok)
