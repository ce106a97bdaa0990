"""Multi-version storage and the replicated log at one datacenter.

Run with ``python walkthroughs/01_versioned_log.py``.
"""

# %% A versioned store keeps every write; reads pick a version by timestamp.
from paxoscp import UNSET, LogEntry, LogView, Timestamp, TxnRecord, VersionedStore
from paxoscp.wal import replay

store = VersionedStore()
store.write("k", {"v": "first"}, Timestamp(1, 0))
store.write("k", {"v": "second"}, Timestamp(3, 0))
print("as of position 2:", store.read("k", Timestamp.latest_in(2)).attributes)
print("latest:", store.read("k").attributes)

# %% The write-ahead log applies decided entries in order, even if they arrive out of order.
def txn(cid, writes, reads=()):
    return TxnRecord((cid, 1), "row", 0, tuple((k, UNSET) for k in reads),
                     tuple((k, {"v": f"c{cid}.{k}"}) for k in writes))


entries = [LogEntry.of(txn(0, ["a"])),
           LogEntry.of(txn(1, ["b"]), txn(2, ["c"], reads=["d"])),  # a combined entry
           LogEntry.of(txn(3, ["a"]))]
view = LogView("row", VersionedStore())
for position in (3, 1, 2):
    view.apply_entry(position, entries[position - 1])
    print(f"decided {position}: applied through {view.applied_through}, gap={view.has_gap()}")

# %% Reads at a position agree with a serial replay of the log prefix.
for upto in range(4):
    state = replay(entries, upto)
    print(upto, {k: view.read(k, upto) for k in "abc"} == {k: state.get(k, UNSET) for k in "abc"})
