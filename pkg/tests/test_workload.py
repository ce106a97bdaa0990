import csv
import io
import json
import random

import pytest

from paxoscp.harness import conflict_cell
from paxoscp.proposer import MUTATE_PROMOTE
from paxoscp.simnet import preset, topology_from_config
from paxoscp.workload import (RunMetrics, SafetyViolation, WorkloadConfig, csv_text, generate_txn,
                              run_experiment)

SMALL = dict(total_txns=40, interval_ms=200.0)


def test_generated_transaction_has_configured_op_count():
    cfg = WorkloadConfig()
    rng = random.Random(0)
    scripts = [generate_txn(cfg, rng, f"t{i}") for i in range(2000)]
    assert all(len(s) == 10 for s in scripts)
    reads = sum(op[0] == "r" for s in scripts for op in s) / len(scripts)
    assert 4.8 < reads < 5.2


def test_read_fraction_one_gives_read_only_transactions():
    cfg = WorkloadConfig(read_fraction=1.0)
    assert all(op[0] == "r" for op in generate_txn(cfg, random.Random(1), "t"))


def test_small_universe_keys_stay_inside_it():
    cfg = WorkloadConfig(total_attributes=20)
    rng = random.Random(2)
    keys = {op[1] for i in range(200) for op in generate_txn(cfg, rng, f"t{i}")}
    assert len(keys) == 20


def test_written_values_are_unique():
    cfg = WorkloadConfig(read_fraction=0.0)
    rng = random.Random(3)
    vals = [op[2]["v"] for i in range(100) for op in generate_txn(cfg, rng, f"t{i}")]
    assert len(vals) == len(set(vals))


@pytest.mark.parametrize("bad", [dict(read_fraction=1.5), dict(total_txns=0), dict(clients=0),
                                 dict(protocol="raft"), dict(op_delay_ms=-1),
                                 dict(clients=2, client_dcs=[0])])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        WorkloadConfig(**bad)


def test_config_json_round_trip():
    cfg = WorkloadConfig(protocol="basic", promotion_cap=3, mutations=("promote-unchecked",))
    assert WorkloadConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg
    with pytest.raises(ValueError):
        WorkloadConfig.from_json({"nonsense": 1})


def test_single_client_commits_everything():
    m, trace = run_experiment(preset("VVV"), WorkloadConfig(clients=1, **SMALL), seed=0)
    assert m.commits == m.issued > 0
    assert m.promotions == 0 and m.combinations == 0 and m.aborts == 0


def test_read_only_workload_commits_without_paxos():
    m, trace = run_experiment(preset("VVV"), WorkloadConfig(read_fraction=1.0, **SMALL), seed=0)
    assert m.issued == 0 and m.read_only_commits == 40
    assert all(not pos for dc in trace.logs.values() for pos in dc.values())


def test_basic_commits_materially_fewer_than_cp():
    b, _ = run_experiment(preset("VVV"), WorkloadConfig(protocol="BASIC", total_txns=200), seed=3)
    c, _ = run_experiment(preset("VVV"), WorkloadConfig(protocol="CP", total_txns=200), seed=3)
    assert c.commits > 1.15 * b.commits


def test_basic_never_promotes_or_combines():
    m, trace = run_experiment(preset("VVV"), WorkloadConfig(protocol="BASIC", total_txns=200),
                              seed=1)
    assert m.promotions == 0 and m.combinations == 0
    assert set(m.commits_by_round) <= {0}


def test_same_seed_same_metrics():
    cfg = WorkloadConfig(total_txns=60)
    a, ta = run_experiment(preset("VOC"), cfg, seed=5)
    b, tb = run_experiment(preset("VOC"), cfg, seed=5)
    assert a == b and ta.to_jsonl() == tb.to_jsonl()
    c, _ = run_experiment(preset("VOC"), cfg, seed=6)
    assert c.trace_digest != a.trace_digest


def test_metrics_agree_with_trace():
    m, trace = run_experiment(preset("VVV"), WorkloadConfig(total_txns=120), seed=2)
    writers = [t for t in trace.transactions if t.writes]
    assert m.commits == sum(t.status == "COMMITTED" for t in writers)
    assert m.commits + m.aborts + m.unavailable == m.issued == len(writers)
    assert m.issued + m.read_only_commits == 120
    assert sum(v["commits"] for v in m.per_client.values()) == m.commits
    assert len(m.latency_ms) == m.commits


def test_mutated_protocol_fails_loudly():
    cell = conflict_cell([MUTATE_PROMOTE])
    with pytest.raises(SafetyViolation) as err:
        for seed in range(20):
            run_experiment(topology_from_config(cell.topology), cell.workload, seed)
    assert not err.value.verdict.ok


def test_intact_protocol_on_conflict_workload_passes():
    cell = conflict_cell()
    for seed in range(20):
        run_experiment(topology_from_config(cell.topology), cell.workload, seed)


def test_csv_row_columns():
    m = RunMetrics("CP", 3, 100, 4, issued=10, commits_by_round={0: 5, 1: 2, 9: 1}, aborts=2,
                   latency_ms=[1.0, 2.0, 3.0])
    row = m.csv_row()
    assert list(row)[:6] == ["protocol", "D", "attrs", "clients", "issued", "commits"]
    assert row["commits_r0"] == 5 and row["commits_r1"] == 2 and row["commits_r7+"] == 1
    assert row["latency_median"] == 2.0
    parsed = list(csv.DictReader(io.StringIO(csv_text([row]))))
    assert parsed[0]["commits"] == "8"


def test_metrics_json_is_serializable():
    m, _ = run_experiment(preset("VV"), WorkloadConfig(total_txns=20), seed=0)
    d = json.loads(json.dumps(m.to_json()))
    assert d["commits"] == m.commits and set(d["latency"]) == {"mean", "median", "p99"}
