"""Experiment suites and standalone trace verification.

A suite is a list of cells (topology, outages, workload) run over a list of
seeds. Every run's history is checked; metrics are written per run as JSON
and averaged per cell into one CSV row. Suites ship as JSON files in
``presets/`` and can also be given as a path.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .checker import HistoryTrace, TooLarge, brute_force_oracle, check
from .simnet import outages_from_config, topology_from_config
from .workload import RunMetrics, SafetyViolation, WorkloadConfig, csv_text, run_experiment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    """A suite or trace file could not be parsed."""


@dataclass
class Cell:
    label: str
    topology: dict
    workload: WorkloadConfig
    outages: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"label": self.label, "topology": self.topology,
                "workload": self.workload.to_json(), "outages": self.outages}


@dataclass
class SuiteSpec:
    name: str
    cells: list
    seeds: list
    out_dir: Optional[Path] = None

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError(f"suite {self.name!r} has no seeds")
        if not self.cells:
            raise ConfigError(f"suite {self.name!r} has no cells")


def available_suites() -> list:
    return sorted(p.name[:-5] for p in resources.files("paxoscp").joinpath("presets").iterdir()
                  if p.name.endswith(".json"))


def load_suite(name_or_path: str, out_dir: Optional[Path] = None) -> SuiteSpec:
    """Load a shipped suite by name, or a suite JSON file by path."""
    path = Path(name_or_path)
    try:
        if path.suffix == ".json" or path.exists():
            data = json.loads(path.read_text())
        else:
            res = resources.files("paxoscp").joinpath("presets", f"{name_or_path}.json")
            if not res.is_file():
                raise ConfigError(f"unknown suite {name_or_path!r}; shipped: {available_suites()}")
            data = json.loads(res.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read suite {name_or_path!r}: {exc}") from None
    return suite_from_json(data, out_dir)


def suite_from_json(data: dict, out_dir: Optional[Path] = None) -> SuiteSpec:
    """Parse the suite schema; ``defaults`` are merged under every cell."""
    try:
        defaults = data.get("defaults", {})
        cells = []
        for raw in data["cells"]:
            topo = {**defaults.get("topology", {}), **raw.get("topology", {})}
            work = {**defaults.get("workload", {}), **raw.get("workload", {})}
            outages = raw.get("outages", defaults.get("outages", []))
            topology_from_config(topo)
            outages_from_config(outages)
            cells.append(Cell(raw.get("label") or _label(topo, work), topo,
                              WorkloadConfig.from_json(work), outages))
        return SuiteSpec(data["name"], cells, list(data["seeds"]), out_dir)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad suite definition: {exc!r}") from None


def _label(topo: dict, work: dict) -> str:
    where = topo.get("preset") or topo.get("sites") or "custom"
    return f"{where}-{work.get('protocol', 'CP').lower()}-a{work.get('total_attributes', 100)}"


def override(spec: SuiteSpec, seed: Optional[int] = None, protocol: Optional[str] = None,
             loss: Optional[float] = None, promotion_cap: Optional[int] = None) -> SuiteSpec:
    """Apply command-line style overrides to every cell."""
    cells = []
    for c in spec.cells:
        if protocol is not None and c.workload.protocol != protocol.upper():
            continue
        topo = dict(c.topology) if loss is None else {**c.topology, "loss": loss}
        work = c.workload
        try:
            topology_from_config(topo)
            if promotion_cap is not None:
                work = replace(work, promotion_cap=promotion_cap)
        except ValueError as exc:
            raise ConfigError(f"bad override for cell {c.label!r}: {exc}") from None
        cells.append(Cell(c.label, topo, work, c.outages))
    seeds = spec.seeds if seed is None else [seed]
    return SuiteSpec(spec.name, cells, seeds, spec.out_dir)


def run_cell(cell: Cell, seed: int, keep_trace: bool = False):
    """One (cell, seed) run: ``(metrics, violation, trace)``.

    Exactly one of ``metrics`` and ``violation`` is set; ``trace`` is the
    history of a passing run when ``keep_trace`` is given, else None.
    """
    topo = topology_from_config(cell.topology)
    try:
        metrics, trace = run_experiment(topo, cell.workload, seed,
                                        outages_from_config(cell.outages))
    except SafetyViolation as exc:
        return None, exc, None
    return metrics, None, trace if keep_trace else None


def _run_cell_args(args):
    return run_cell(*args)


def aggregate(cell: Cell, runs: Sequence[RunMetrics]) -> dict:
    """Mean of every numeric CSV column across seeds."""
    rows = [m.csv_row() for m in runs]
    out = {"label": cell.label, **{k: rows[0][k] for k in ("protocol", "D", "attrs", "clients")},
           "seeds": len(rows)}
    for k in rows[0]:
        if k not in out:
            out[k] = round(float(np.mean([r[k] for r in rows])), 3)
    return out


@dataclass
class SuiteResult:
    rows: list
    runs: dict
    violations: list
    traces: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_VIOLATION if self.violations else EXIT_OK


def run_suite(spec: SuiteSpec, jobs: int = 1, save_traces: bool = False) -> SuiteResult:
    """Run every (cell, seed); write per-run JSON and an aggregate CSV.

    With ``save_traces`` the history of every passing run is kept (and
    written next to its metrics); failing runs always keep theirs.
    """
    work = [(cell, seed, save_traces) for cell in spec.cells for seed in spec.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_run_cell_args, work))
    else:
        results = [run_cell(*w) for w in work]
    runs: dict = {}
    violations = []
    traces = {}
    for (cell, seed, _keep), (metrics, violation, trace) in zip(work, results):
        if trace is not None:
            traces[(cell.label, seed)] = trace
        if violation is not None:
            logger.error("%s seed %d: %s", cell.label, seed, violation)
            violations.append((cell.label, seed, violation))
        else:
            runs.setdefault(cell.label, []).append((seed, metrics))
    rows = [aggregate(cell, [m for _s, m in runs[cell.label]])
            for cell in spec.cells if cell.label in runs]
    if spec.out_dir is not None:
        _write(spec, rows, runs, violations, traces)
    return SuiteResult(rows, runs, violations, traces)


def _write(spec: SuiteSpec, rows, runs, violations, traces) -> None:
    out = Path(spec.out_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    for label, items in runs.items():
        for seed, m in items:
            (out / "runs" / f"{label}-seed{seed}.json").write_text(
                json.dumps(m.to_json(), sort_keys=True, indent=2) + "\n")
    for (label, seed), trace in traces.items():
        (out / "runs" / f"{label}-seed{seed}.trace.jsonl").write_text(trace.to_jsonl())
    (out / f"{spec.name}.csv").write_text(csv_text(rows))
    for label, seed, exc in violations:
        base = f"VIOLATION-{label}-seed{seed}"
        (out / f"{base}.jsonl").write_text(exc.trace.to_jsonl())
        (out / f"{base}.verdict.json").write_text(
            json.dumps(exc.verdict.to_json(), indent=2) + "\n")


def verify_trace(path: str | os.PathLike, brute_force: bool = False, out=print) -> int:
    """Check a JSON-lines trace file; print the verdict; return an exit code."""
    try:
        trace = HistoryTrace.from_jsonl(Path(path).read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        out(f"error: cannot parse trace {path}: {exc}")
        return EXIT_CONFIG
    verdict = check(trace)
    report = {"constructive": verdict.to_json()}
    ok = verdict.ok
    if brute_force:
        try:
            bf = brute_force_oracle(trace)
            report["brute_force"] = bf.to_json()
            ok = ok and bf.ok
        except TooLarge as exc:
            report["brute_force"] = {"skipped": str(exc)}
    out(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if ok else EXIT_VIOLATION


def adversity_cell(datacenters: int, loss: float, outage: bool, protocol: str,
                   total_txns: int = 12) -> Cell:
    """A small, contended run used for safety sweeps.

    Clients sit in different datacenters and race on ten attributes; with
    ``outage`` the last datacenter is down for a window in the middle.
    """
    clients = 3
    work = WorkloadConfig(total_txns=total_txns, ops_per_txn=4, total_attributes=10,
                          clients=clients, stagger_ms=5.0, interval_ms=20.0, op_delay_ms=4.0,
                          client_dcs=[i % datacenters for i in range(clients)],
                          protocol=protocol)
    outages = [{"datacenter": datacenters - 1, "from_ms": 40.0, "to_ms": 400.0}] if outage else []
    label = f"d{datacenters}-loss{loss:g}-{'outage' if outage else 'up'}-{protocol.lower()}"
    return Cell(label, {"preset": f"replicas-{datacenters}", "loss": loss}, work, outages)


def adversity_matrix() -> list:
    return [adversity_cell(d, loss, outage, p)
            for d in (2, 3, 4, 5) for loss in (0.0, 0.05, 0.2)
            for outage in (False, True) for p in ("BASIC", "CP")]


def conflict_cell(mutations: Sequence[str] = (), total_txns: int = 30) -> Cell:
    """Three clients in three datacenters hammering six attributes.

    Read-write conflicts between racing commits are the norm here, so a
    protocol that skips a conflict check is caught within a few seeds.
    """
    work = WorkloadConfig(total_txns=total_txns, ops_per_txn=4, total_attributes=6, clients=3,
                          stagger_ms=0.0, interval_ms=5.0, op_delay_ms=2.0,
                          client_dcs=[0, 1, 2], mutations=tuple(mutations))
    label = "conflict-" + ("-".join(mutations) or "intact")
    return Cell(label, {"preset": "VVV"}, work)


def liveness_cell(seed: int) -> Cell:
    """Lossy run where a minority of datacenters goes down for a while."""
    d = 3 if seed % 2 == 0 else 5
    loss = (0.0, 0.05, 0.2)[seed % 3]
    outages = [{"datacenter": d - 1, "from_ms": 100.0, "to_ms": 3000.0}]
    if d == 5:
        outages.append({"datacenter": d - 2, "from_ms": 500.0, "to_ms": 6000.0})
    work = WorkloadConfig(total_txns=20, ops_per_txn=6, total_attributes=20, clients=3,
                          stagger_ms=50.0, interval_ms=200.0, op_delay_ms=10.0,
                          client_dcs=[0, 1, 2])
    return Cell(f"liveness-d{d}-loss{loss:g}", {"preset": f"replicas-{d}", "loss": loss},
                work, outages)
