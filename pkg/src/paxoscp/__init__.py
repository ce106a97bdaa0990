"""Paxos and Paxos-CP transaction commit over a simulated multi-datacenter datastore."""

from .acceptor import Acceptor, Ballot
from .checker import (HistoryTrace, MissingEntry, TooLarge, TxnTrace, Verdict, brute_force_oracle,
                      build_serial_history, check, check_replication, verify_serial)
from .cluster import Cluster
from .mvstore import UNSET, Timestamp, VersionedStore
from .proposer import BASIC, CP, ProtocolConfig, Unavailable
from .simnet import OutageWindow, Simulator, Topology, preset
from .txn import TransactionClient
from .wal import LogEntry, LogView, TxnRecord
from .workload import RunMetrics, SafetyViolation, WorkloadConfig, generate_txn, run_experiment

__all__ = [
    "Acceptor", "Ballot", "HistoryTrace", "MissingEntry", "TooLarge", "TxnTrace", "Verdict",
    "brute_force_oracle", "build_serial_history", "check", "check_replication", "verify_serial",
    "Cluster", "UNSET", "Timestamp", "VersionedStore", "BASIC", "CP", "ProtocolConfig",
    "Unavailable", "OutageWindow", "Simulator", "Topology", "preset", "TransactionClient",
    "LogEntry", "LogView", "TxnRecord", "RunMetrics", "SafetyViolation", "WorkloadConfig",
    "generate_txn", "run_experiment",
]
