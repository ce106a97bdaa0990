"""Checking recorded histories: replication, serial order, and the brute-force oracle.

Run with ``python walkthroughs/04_checking_histories.py``.
"""

# %% Record a small contended run and check it.
import json

from paxoscp import WorkloadConfig, brute_force_oracle, check, preset, run_experiment
from paxoscp.checker import HistoryTrace

cfg = WorkloadConfig(total_txns=6, ops_per_txn=4, total_attributes=5, clients=3,
                     client_dcs=[0, 1, 2], stagger_ms=0, interval_ms=10, op_delay_ms=3)
metrics, trace = run_experiment(preset("VOC"), cfg, seed=3)
print("commits", metrics.commits, "of", metrics.issued, "| constructive:", check(trace).ok,
      "| brute force:", brute_force_oracle(trace).ok)

# %% Traces are JSON lines; corrupt one replica's log entry and check again.
lines = trace.to_jsonl().splitlines()
for i, line in enumerate(lines):
    rec = json.loads(line)
    if rec["record"] == "log" and rec["dc"] == 2:
        rec["txns"] = [[42, 1]]
        lines[i] = json.dumps(rec)
        break
bad = HistoryTrace.from_jsonl("\n".join(lines) + "\n")
verdict = check(bad)
print("corrupted:", verdict.ok, verdict.tags())
tag, message, witness = verdict.violations[0]
print(f"[{tag}] {message}")
print("witness keys:", sorted(witness))
