import csv
import json

import pytest

from paxoscp import cli
from paxoscp.harness import (EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, ConfigError, available_suites,
                             conflict_cell, load_suite, override, run_suite, suite_from_json,
                             SuiteSpec, verify_trace)
from paxoscp.proposer import MUTATE_PROMOTE
from paxoscp.simnet import preset
from paxoscp.workload import WorkloadConfig, run_experiment


def rows(path):
    return list(csv.DictReader(path.open()))


def test_shipped_suites():
    assert {"default", "replica-sweep", "contention-sweep", "concurrency-sweep",
            "fault-drills"} <= set(available_suites())


def test_replica_sweep_has_eight_cells():
    assert len(load_suite("replica-sweep").cells) == 8


def test_contention_sweep_writes_six_rows(tmp_path):
    spec = load_suite("contention-sweep", tmp_path)
    spec = override(spec, seed=0)
    for c in spec.cells:
        c.workload.total_txns = 16
    res = run_suite(spec)
    assert res.exit_code == EXIT_OK
    got = rows(tmp_path / "contention-sweep.csv")
    assert len(got) == 6
    assert sorted({r["attrs"] for r in got}) == ["100", "20", "500"]
    assert len(list((tmp_path / "runs").glob("*.json"))) == 6


def test_replica_sweep_writes_eight_rows(tmp_path):
    spec = override(load_suite("replica-sweep", tmp_path), seed=1)
    for c in spec.cells:
        c.workload.total_txns = 12
    run_suite(spec)
    assert len(rows(tmp_path / "replica-sweep.csv")) == 8


def test_seeds_are_averaged(tmp_path):
    spec = suite_from_json({"name": "s", "seeds": [0, 1, 2], "cells": [
        {"topology": {"preset": "VV"}, "workload": {"total_txns": 10}}]}, tmp_path)
    res = run_suite(spec)
    assert res.rows[0]["seeds"] == 3
    assert len(res.runs[spec.cells[0].label]) == 3


def test_mutated_suite_exits_nonzero_and_keeps_witness(tmp_path):
    cell = conflict_cell([MUTATE_PROMOTE])
    spec = SuiteSpec("mut", [cell], list(range(5)), tmp_path)
    res = run_suite(spec)
    assert res.exit_code == EXIT_VIOLATION
    traces = list(tmp_path.glob("VIOLATION-*.jsonl"))
    assert traces
    assert verify_trace(traces[0], out=lambda s: None) == EXIT_VIOLATION


def test_bad_suite_definitions():
    with pytest.raises(ConfigError):
        suite_from_json({"name": "x", "seeds": [], "cells": [{"topology": {"preset": "VV"}}]})
    with pytest.raises(ConfigError):
        suite_from_json({"name": "x", "seeds": [0], "cells": [{"topology": {"preset": "??"}}]})
    with pytest.raises(ConfigError):
        suite_from_json({"name": "x", "seeds": [0],
                         "cells": [{"topology": {"preset": "VV"}, "workload": {"bogus": 1}}]})
    with pytest.raises(ConfigError):
        load_suite("no-such-suite")


def test_overrides():
    spec = override(load_suite("default"), seed=9, protocol="basic", loss=0.1, promotion_cap=2)
    assert spec.seeds == [9]
    assert [c.workload.protocol for c in spec.cells] == ["BASIC"]
    assert spec.cells[0].topology["loss"] == 0.1
    assert spec.cells[0].workload.promotion_cap == 2


def write_trace(tmp_path, seed=0, n=20):
    _, trace = run_experiment(preset("VVV"), WorkloadConfig(total_txns=n), seed=seed)
    path = tmp_path / "trace.jsonl"
    path.write_text(trace.to_jsonl())
    return path


def test_verify_correct_trace(tmp_path):
    out = []
    assert verify_trace(write_trace(tmp_path), out=out.append) == EXIT_OK
    assert json.loads(out[0])["constructive"]["ok"] is True


def test_verify_corrupted_trace_prints_r1_witness(tmp_path):
    path = write_trace(tmp_path)
    lines = path.read_text().splitlines()
    for i, line in enumerate(lines):
        rec = json.loads(line)
        if rec["record"] == "log" and rec["dc"] == 1 and rec["kind"] == "TXNLIST":
            rec["txns"] = [[99, 99]]
            lines[i] = json.dumps(rec)
            break
    path.write_text("\n".join(lines) + "\n")
    out = []
    assert verify_trace(path, out=out.append) == EXIT_VIOLATION
    report = json.loads(out[0])["constructive"]
    assert report["violations"][0]["property"] == "R1"
    assert "position" in report["violations"][0]["witness"]


def test_verify_brute_force_on_large_trace_reports_too_large(tmp_path):
    out = []
    path = write_trace(tmp_path, n=40)
    assert verify_trace(path, brute_force=True, out=out.append) == EXIT_OK
    report = json.loads(out[0])
    assert "skipped" in report["brute_force"] and report["constructive"]["ok"]


def test_verify_unparseable_trace(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("{{{\n")
    assert verify_trace(path, out=lambda s: None) == EXIT_CONFIG


def test_cli_run_and_verify(tmp_path, capsys):
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"name": "tiny", "seeds": [0, 1], "cells": [
        {"label": "vv", "topology": {"preset": "VV"}, "workload": {"total_txns": 8}}]}))
    code = cli.main(["run", "--suite", str(suite), "--out", str(tmp_path / "o"), "--seed", "3",
                     "--protocol", "cp", "--loss", "0.05", "--promotion-cap", "1"])
    assert code == 0
    assert "vv,CP,2" in capsys.readouterr().out
    assert (tmp_path / "o" / "runs" / "vv-seed3.json").exists()
    assert cli.main(["verify", "--trace", str(write_trace(tmp_path)), "--brute-force"]) == 0


def test_saved_traces_verify_cleanly(tmp_path, capsys):
    code = cli.main(["run", "--suite", "default", "--out", str(tmp_path), "--seed", "2",
                     "--protocol", "basic", "--save-traces"])
    assert code == EXIT_OK
    trace = tmp_path / "runs" / "vvv-basic-seed2.trace.jsonl"
    assert cli.main(["verify", "--trace", str(trace)]) == EXIT_OK


def test_cli_config_error_exit_code(tmp_path):
    assert cli.main(["run", "--suite", "no-such-suite", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert cli.main(["run", "--suite", "default", "--out", str(tmp_path),
                     "--protocol", "basic", "--loss", "1.5"]) == EXIT_CONFIG
