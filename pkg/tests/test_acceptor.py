import pytest

from paxoscp.acceptor import NULL_BALLOT, Acceptor, Ballot
from paxoscp.mvstore import VersionedStore
from paxoscp.wal import ConflictingDecision, LogEntry, LogView, TxnRecord

E = LogEntry.of(TxnRecord((1, 1), "g", 0, (), (("x", {"v": 1}),)))
F = LogEntry.of(TxnRecord((2, 1), "g", 0, (), (("x", {"v": 2}),)))


def fresh():
    return Acceptor(VersionedStore())


def test_prepare_on_fresh_cell_promises_with_empty_vote():
    a = fresh()
    r = a.on_prepare("g", 1, Ballot(0, 1))
    assert r.ok
    assert r.last_ballot == NULL_BALLOT and r.last_value is None
    assert a.cell("g", 1).next_bal == Ballot(0, 1)


def test_prepare_below_promise_fails_and_reports_it():
    a = fresh()
    a.on_prepare("g", 1, Ballot(5, 2))
    r = a.on_prepare("g", 1, Ballot(5, 1))
    assert not r.ok
    assert r.promise == Ballot(5, 2)


def test_prepare_equal_to_promise_fails():
    a = fresh()
    a.on_prepare("g", 1, Ballot(5, 2))
    assert not a.on_prepare("g", 1, Ballot(5, 2)).ok


def test_prepare_returns_last_vote():
    a = fresh()
    a.on_prepare("g", 1, Ballot(3, 1))
    assert a.on_accept("g", 1, Ballot(3, 1), E).ok
    r = a.on_prepare("g", 1, Ballot(4, 2))
    assert r.ok and r.last_ballot == Ballot(3, 1) and r.last_value == E


def test_accept_at_promised_ballot():
    a = fresh()
    a.on_prepare("g", 1, Ballot(4, 2))
    assert a.on_accept("g", 1, Ballot(4, 2), E).ok
    c = a.cell("g", 1)
    assert c.ballot_number == Ballot(4, 2) and c.value == E


def test_accept_at_other_ballot_fails_without_change():
    a = fresh()
    a.on_prepare("g", 1, Ballot(4, 2))
    before = a.cell("g", 1)
    r = a.on_accept("g", 1, Ballot(3, 9), E)
    assert not r.ok and r.promise == Ballot(4, 2)
    assert a.cell("g", 1) == before


def test_zero_ballot_accepted_on_fresh_cell():
    a = fresh()
    assert a.on_accept("g", 1, Ballot(0, 7), E).ok
    assert a.cell("g", 1).value == E


def test_zero_ballot_refused_after_any_prepare():
    a = fresh()
    a.on_prepare("g", 1, Ballot(1, 3))
    assert not a.on_accept("g", 1, Ballot(0, 7), E).ok


def test_second_zero_ballot_from_other_client_refused():
    a = fresh()
    assert a.on_accept("g", 1, Ballot(0, 7), E).ok
    assert not a.on_accept("g", 1, Ballot(0, 8), F).ok


def test_apply_decides_and_is_idempotent():
    a = fresh()
    log = LogView("g", a.store)
    assert a.on_apply("g", 1, Ballot(2, 1), E, log) is True
    assert a.on_apply("g", 1, Ballot(2, 1), E, log) is False
    assert log.decided[1] == E
    assert a.cell("g", 1).value == E


def test_apply_of_different_value_raises():
    a = fresh()
    log = LogView("g", a.store)
    a.on_apply("g", 1, Ballot(2, 1), E, log)
    with pytest.raises(ConflictingDecision):
        a.on_apply("g", 1, Ballot(3, 1), F, log)


def test_apply_keeps_ballots_monotone():
    a = fresh()
    log = LogView("g", a.store)
    a.on_prepare("g", 1, Ballot(9, 1))
    a.on_apply("g", 1, Ballot(2, 1), E, log)
    c = a.cell("g", 1)
    assert c.next_bal == Ballot(9, 1)
    assert c.next_bal >= c.ballot_number


def test_prepare_retries_when_promise_moves_underneath():
    a = fresh()
    store = a.store
    real = store.check_and_write
    calls = []

    def racing(*args):
        if not calls:
            calls.append(1)
            # a concurrent handler promises first
            store.write(("paxos", "g", 1),
                        {"next_bal": Ballot(2, 5), "ballot_number": NULL_BALLOT, "value": None})
        return real(*args)

    store.check_and_write = racing
    r = a.on_prepare("g", 1, Ballot(3, 1))
    assert calls
    assert r.ok
    assert a.cell("g", 1).next_bal == Ballot(3, 1)


def test_prepare_loses_to_a_higher_concurrent_promise():
    a = fresh()
    store = a.store
    real = store.check_and_write

    def racing(*args):
        store.check_and_write = real
        store.write(("paxos", "g", 1),
                    {"next_bal": Ballot(7, 5), "ballot_number": NULL_BALLOT, "value": None})
        return real(*args)

    store.check_and_write = racing
    r = a.on_prepare("g", 1, Ballot(3, 1))
    assert not r.ok and r.promise == Ballot(7, 5)


def test_ballots_order_by_counter_then_proposer():
    assert Ballot(5, 1) < Ballot(5, 2) < Ballot(6, 0)
    assert NULL_BALLOT < Ballot(0, 0)
