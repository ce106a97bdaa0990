import pytest

from paxoscp.checker import check
from paxoscp.mvstore import UNSET
from paxoscp.simnet import OutageWindow
from paxoscp.txn import (ABORT, ABORTED, COMMIT, COMMITTED, GroupMismatch, TransactionError)


def run_txn(c, client, ops, mode=None):
    def body():
        txn = yield from client.begin("g")
        for op in ops:
            yield c.sim.timeout(1.0)
            if op[0] == "r":
                yield from client.read(txn, op[1])
            else:
                client.write(txn, op[1], op[2])
        out = yield from client.commit(txn, mode)
        return txn, out
    return body()


def test_begin_on_empty_log_has_read_position_zero(make_cluster):
    c = make_cluster()
    client = c.add_client(0)
    assert c.call(client.begin("g")).read_position == 0


def test_begin_sees_applied_prefix(make_cluster):
    c = make_cluster()
    client = c.add_client(0)
    for i in range(4):
        c.call(run_txn(c, client, [("w", "x", {"v": i})]))
    assert c.call(client.begin("g")).read_position == 4


def test_begin_fails_over_when_local_datacenter_is_down(make_cluster):
    c = make_cluster(sites="VOC", outages=[OutageWindow(0, 50_000.0, 1e12)])
    writer = c.add_client(1)
    for i in range(7):
        c.call(run_txn(c, writer, [("w", "x", {"v": i})]))
    c.run()
    c.sim.run(until=60_000.0)
    reader = c.add_client(0)
    txn = c.call(reader.begin("g"))
    assert txn.read_position == 7


def test_read_your_own_write_without_recording_it(make_cluster):
    c = make_cluster()
    client = c.add_client(0)
    txn = c.call(client.begin("g"))
    client.write(txn, "x", {"v": 1})
    assert c.call(client.read(txn, "x")) == {"v": 1}
    assert txn.read_set == []


def test_read_of_unwritten_key_is_unset_and_recorded(make_cluster):
    c = make_cluster()
    client = c.add_client(0)
    txn = c.call(client.begin("g"))
    assert c.call(client.read(txn, "nope")) is UNSET
    assert txn.read_set == [("nope", UNSET)]


def test_repeated_reads_pinned_to_read_position(make_cluster):
    c = make_cluster()
    a, b = c.add_client(0), c.add_client(1)
    c.call(run_txn(c, b, [("w", "x", {"v": "old"})]))
    c.run()
    txn = c.call(a.begin("g"))
    first = c.call(a.read(txn, "x"))
    c.call(run_txn(c, b, [("w", "x", {"v": "new"})]))
    assert c.call(a.read(txn, "x")) == first == {"v": "old"}


def test_second_write_to_a_key_wins(make_cluster):
    c = make_cluster()
    client = c.add_client(0)
    txn, out = c.call(run_txn(c, client, [("w", "x", {"v": 1}), ("w", "x", {"v": 2})]))
    assert out.decision == COMMIT
    c.run()
    assert c.services[0].log("g").read("x", 1) == {"v": 2}


def test_foreign_group_write_is_rejected(make_cluster):
    c = make_cluster()
    client = c.add_client(0)
    client.catalog = {"x": "g", "y": "other"}
    txn = c.call(client.begin("g"))
    client.write(txn, "x", {"v": 1})
    with pytest.raises(GroupMismatch):
        client.write(txn, "y", {"v": 1})


def test_one_active_transaction_per_group(make_cluster):
    c = make_cluster()
    client = c.add_client(0)
    c.call(client.begin("g"))
    with pytest.raises(TransactionError):
        c.call(client.begin("g"))
    c.call(client.begin("h"))


def test_finished_transaction_refuses_operations(make_cluster):
    c = make_cluster()
    client = c.add_client(0)
    txn, _ = c.call(run_txn(c, client, [("w", "x", {"v": 1})]))
    with pytest.raises(TransactionError):
        client.write(txn, "x", {"v": 2})


def test_read_only_commit_sends_no_messages(make_cluster):
    c = make_cluster()
    client = c.add_client(0)
    txn = c.call(client.begin("g"))
    c.call(client.read(txn, "x"))
    sent = len(c.net.traffic)
    out = c.call(client.commit(txn))
    assert out.decision == COMMIT and out.final_position is None
    assert len(c.net.traffic) == sent


def race(c, a, b, ops_a, ops_b, mode):
    results = {}

    def go(client, ops, name):
        results[name] = yield from run_txn(c, client, ops, mode)

    c.sim.spawn(go(a, ops_a, "a"))
    c.sim.spawn(go(b, ops_b, "b"))
    c.run()
    return results["a"], results["b"]


def test_conflicting_writers_basic_exactly_one_commits(make_cluster):
    for seed in range(10):
        c = make_cluster(mode="BASIC", seed=seed)
        a, b = c.add_client(0), c.add_client(1)
        (ta, oa), (tb, ob) = race(c, a, b, [("r", "x"), ("w", "x", {"v": "a"})],
                                  [("r", "x"), ("w", "x", {"v": "b"})], "BASIC")
        assert {oa.decision, ob.decision} == {COMMIT, ABORT}
        assert {ta.status, tb.status} == {COMMITTED, ABORTED}


def test_non_conflicting_writers_cp_both_commit(make_cluster):
    for seed in range(10):
        c = make_cluster(seed=seed)
        a, b = c.add_client(0), c.add_client(1)
        (ta, oa), (tb, ob) = race(c, a, b, [("r", "x"), ("w", "y", {"v": "a"})],
                                  [("r", "z"), ("w", "w", {"v": "b"})], "CP")
        assert oa.decision == ob.decision == COMMIT
        assert oa.final_position != ob.final_position or oa.combined


def test_promotion_chain_of_two(make_cluster):
    c = make_cluster()
    a, b = c.add_client(0), c.add_client(0)
    txn = c.call(a.begin("g"))
    c.call(a.read(txn, "x"))
    a.write(txn, "y", {"v": "a"})
    c.call(run_txn(c, b, [("w", "p", {"v": "b1"})]))
    c.call(run_txn(c, b, [("w", "q", {"v": "b2"})]))
    out = c.call(a.commit(txn))
    assert out.decision == COMMIT
    assert out.promotions == 2 and out.final_position == 3
    c.run()
    assert check(c.trace()).ok


def test_promotion_blocked_by_conflict(make_cluster):
    c = make_cluster()
    a, b = c.add_client(0), c.add_client(0)
    txn = c.call(a.begin("g"))
    c.call(a.read(txn, "x"))
    a.write(txn, "y", {"v": "a"})
    c.call(run_txn(c, b, [("w", "x", {"v": "b"})]))
    out = c.call(a.commit(txn))
    assert out.decision == ABORT and out.promotions == 0


def test_promotion_cap_zero_aborts_instead(make_cluster):
    c = make_cluster(promotion_cap=0)
    a, b = c.add_client(0), c.add_client(0)
    txn = c.call(a.begin("g"))
    a.write(txn, "y", {"v": "a"})
    c.call(run_txn(c, b, [("w", "p", {"v": "b"})]))
    assert c.call(a.commit(txn)).decision == ABORT
