"""Commit counts for basic Paxos and Paxos-CP under the default workload.

This runs 500 transactions per protocol, which takes a few seconds. The
full suites are available through ``paxoscp run --suite <name>``.
"""

# %% One seed of the default workload for each protocol.
import numpy as np

from paxoscp import WorkloadConfig, preset, run_experiment

for protocol in ("BASIC", "CP"):
    m, _ = run_experiment(preset("VVV"), WorkloadConfig(protocol=protocol), seed=0)
    print(f"{protocol:5s} commits {m.commits}/{m.issued}  aborts {m.aborts}  "
          f"promotions {m.promotions}  combinations {m.combinations}")
    print("      commits per promotion round (r0..r7+):", m.histogram())
    print("      latency ms:", m.latency_summary())

# %% Contention matters for Paxos-CP only: fewer attributes means more read-write overlap.
for attrs in (20, 500):
    rates = []
    for protocol in ("BASIC", "CP"):
        m, _ = run_experiment(preset("VVV"), WorkloadConfig(protocol=protocol,
                                                            total_attributes=attrs), seed=0)
        rates.append(m.commit_rate)
    print(f"{attrs:3d} attributes: BASIC {rates[0]:.2f}  CP {rates[1]:.2f}  "
          f"gain {np.divide(*rates[::-1]):.2f}x")
