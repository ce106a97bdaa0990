"""Outages, message loss, and what the checker does with a broken protocol.

Run with ``python walkthroughs/06_faults_and_mutations.py``.
"""

# %% A minority outage with 20% loss: transactions slow down but never hang.
from paxoscp import OutageWindow, SafetyViolation, WorkloadConfig, preset, run_experiment
from paxoscp.harness import conflict_cell
from paxoscp.proposer import MUTATE_PROMOTE
from paxoscp.simnet import topology_from_config

cfg = WorkloadConfig(total_txns=30, clients=3, client_dcs=[0, 1, 2], op_delay_ms=10)
outage = [OutageWindow(2, 100.0, 5000.0)]
m, trace = run_experiment(preset("VOC", loss=0.2), cfg, seed=2, outages=outage)
print(f"commits {m.commits}, aborts {m.aborts}, unavailable {m.unavailable}, "
      f"simulated {m.duration_ms / 1000:.1f} s")

# %% Skip promotion's read-conflict check and the checker reports the damage.
cell = conflict_cell([MUTATE_PROMOTE])
for seed in range(20):
    try:
        run_experiment(topology_from_config(cell.topology), cell.workload, seed)
    except SafetyViolation as exc:
        print(f"seed {seed}: {exc}")
        break
