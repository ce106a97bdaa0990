import pytest

from paxoscp.cluster import Cluster
from paxoscp.mvstore import UNSET
from paxoscp.proposer import ProtocolConfig
from paxoscp.simnet import preset
from paxoscp.wal import LogEntry, TxnRecord


def rec(tid, reads=(), writes=(), rp=0, group="g"):
    """A TxnRecord with read keys (observed unset) and uniquely valued writes."""
    return TxnRecord((tid, 1), group, rp, tuple((k, UNSET) for k in reads),
                     tuple((k, {"v": f"t{tid}.{k}"}) for k in writes))


def entry(*txns):
    return LogEntry.of(*txns)


@pytest.fixture
def make_cluster():
    def build(sites="VVV", mode="CP", seed=0, outages=(), **cfg):
        return Cluster(preset(sites), ProtocolConfig(mode=mode, **cfg), seed=seed,
                       outages=outages)
    return build


_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def criterion(request):
    """``report(n, ok, detail)`` records one acceptance line, then asserts it."""
    lines = request.config.stash[_CRITERIA]

    def report(n, ok, detail):
        lines[n] = (bool(ok), detail)
        assert ok, detail
    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_CRITERIA]
    seen = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            name = getattr(rep, "nodeid", "").rpartition("::")[2]
            if not name.startswith("test_criterion_"):
                continue
            if outcome == "error" or rep.when == "call":
                seen[int(name.split("_")[2])] = outcome == "passed"
    if not seen:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(seen):
        ok, detail = lines.get(n, (seen[n], "no report (test raised before reporting)"))
        status = "PASS" if ok and seen[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
