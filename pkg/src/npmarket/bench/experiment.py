"""Experiment sweeps: one fresh network per (consensus, itr, round) cell."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from ..chain import FUNCTIONS, Status, dump_ledger
from ..contract import genesis_state
from ..ibft import IbftNode
from ..netsim import Simulator
from ..raft import RaftNode
from ..replica import Observer
from .metrics import OVERALL, TxRecord, resolve, round_metrics
from .workload import generate

REPORT_FORMAT = "npmarket-report/1"
TXLOG_FORMAT = "npmarket-txlog/1"
METRIC_FIELDS = ("injected", "committed", "failed", "reverted", "timed_out", "throughput_tps",
                 "latency_min_s", "latency_avg_s", "latency_max_s", "success_rate")
CSV_FIELDS = ("consensus", "round", "itr", "function", *METRIC_FIELDS, "tip_hash", "tips_agree")
SERIES = ("throughput_tps", "latency_avg_s", "success_rate")


def derive_seed(*parts) -> int:
    """64-bit seed for one cell component, stable across runs and platforms."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def cell_name(consensus: str, itr: float, round_name: str) -> str:
    return f"{consensus}-itr{itr:g}-{round_name}"


class Recorder(Observer):
    """Notes when each transaction's submitting node applies it."""

    def __init__(self):
        self.records: dict[int, TxRecord] = {}
        self.empty_blocks = 0
        self.leaders: dict[int, set] = {}

    def on_block_applied(self, node_id, block, receipts, now):
        if not block.txs:
            self.empty_blocks += 1
        for receipt in receipts:
            rec = self.records.get(receipt.tx_id)
            if rec is not None and rec.node == node_id and rec.confirm_time is None:
                rec.status, rec.reason, rec.confirm_time = receipt.status, receipt.reason, now

    def on_leader(self, node_id, term, now):
        self.leaders.setdefault(term, set()).add(node_id)


def make_nodes(consensus: str, cfg, sim: Simulator, genesis, observer) -> list:
    nodes = []
    for i in range(cfg.topology.n):
        if consensus == "raft":
            node = RaftNode(i, sim, genesis, cfg.cost, observer, cfg.raft, cfg.block_gas_limit_ms)
        elif consensus == "ibft":
            node = IbftNode(i, sim, genesis, cfg.cost, observer, cfg.ibft, cfg.block_gas_limit_ms)
        else:
            raise ValueError(f"unknown consensus {consensus!r}")
        sim.add_node(node)
        nodes.append(node)
    sim.start()
    return nodes


def quiesce(sim: Simulator, nodes, limit_ms: float, step_ms: float = 1000.0) -> bool:
    """Stop new blocks and let replication drain until all live tips agree."""
    for node in nodes:
        node.halted = True
    deadline = sim.now + limit_ms
    while True:
        live = [n for n in nodes if n.node_id not in sim.crashed]
        if len({n.ledger.tip.hash for n in live}) <= 1:
            return True
        if sim.now >= deadline:
            return False
        sim.run_until(sim.now + step_ms)


@dataclass
class CellRun:
    consensus: str
    itr: float
    round: str
    spec: object
    workload_seed: int
    network_seed: int
    sim: Simulator
    nodes: list
    recorder: Recorder
    records: list
    metrics: dict
    tips: list
    trace: list | None = None

    @property
    def name(self) -> str:
        return cell_name(self.consensus, self.itr, self.round)

    @property
    def tips_agree(self) -> bool:
        return len(set(self.tips)) == 1 and len(self.tips) == len(self.nodes)


def run_cell(cfg, consensus: str, itr: float, round_name: str, seed: int, faults=(), trace: bool = False) -> CellRun:
    spec = cfg.workload.spec(itr, round_name)
    wseed = derive_seed(seed, "workload", f"{itr:g}", round_name)
    # rounds of one (consensus, itr) cell share network randomness, so they are
    # compared under the same election outcome and leader placement
    nseed = derive_seed(seed, "network", consensus, f"{itr:g}")
    workload = generate(spec, wseed, cfg.topology.n)
    genesis = genesis_state(workload.genesis)
    lines = [] if trace else None
    sim = Simulator(cfg.topology, nseed, lines)
    recorder = Recorder()
    nodes = make_nodes(consensus, cfg, sim, genesis, recorder)
    for action in faults:
        sim.inject_fault(action)
    for node, tx in workload.txs:
        recorder.records[tx.tx_id] = TxRecord(tx.tx_id, tx.function, node, tx.submit_time)
        sim.inject_tx(tx, node, tx.submit_time)
    last_submit = workload.txs[-1][1].submit_time if workload.txs else spec.warmup_s * 1000.0
    sim.run_until(last_submit + spec.tx_timeout_s * 1000.0)
    quiesce(sim, nodes, cfg.quiesce_limit_s * 1000.0)
    timeout_ms = spec.tx_timeout_s * 1000.0
    records = [resolve(r, timeout_ms) for r in recorder.records.values()]
    tips = [n.ledger.tip.hash.hex() for n in nodes if n.node_id not in sim.crashed]
    return CellRun(consensus, itr, round_name, spec, wseed, nseed, sim, nodes, recorder, records,
                   round_metrics(records, spec.duration_s), tips, lines)


# -- output -------------------------------------------------------------------

def write_atomic(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def txlog_lines(run: CellRun):
    yield {"type": "meta", "format": TXLOG_FORMAT, "cell": run.name, "consensus": run.consensus,
           "itr": run.itr, "round": run.round, "duration_s": run.spec.duration_s,
           "tx_timeout_s": run.spec.tx_timeout_s}
    for r in sorted(run.recorder.records.values(), key=lambda r: r.tx_id):
        yield {"type": "submit", "tx_id": r.tx_id, "function": r.function, "node": r.node, "t": r.submit_time}
    confirmed = [r for r in run.recorder.records.values() if r.confirm_time is not None]
    for r in sorted(confirmed, key=lambda r: (r.confirm_time, r.tx_id)):
        # the receipt as applied; the deadline is left for the reader to judge
        status = Status.REVERTED if r.reason is not None else Status.SUCCESS
        yield {"type": "confirm", "tx_id": r.tx_id, "node": r.node, "t": r.confirm_time,
               "status": status.value, "reason": r.reason}


def write_cell_files(run: CellRun, out_dir: str, trace: bool) -> None:
    cell_dir = os.path.join(out_dir, "cells", run.name)
    write_atomic(os.path.join(cell_dir, "txlog.jsonl"),
                 "".join(json.dumps(line, sort_keys=True) + "\n" for line in txlog_lines(run)))
    if trace:
        write_atomic(os.path.join(cell_dir, "trace.log"), "\n".join(run.trace) + "\n")
        for node in run.nodes:
            path = os.path.join(cell_dir, f"ledger-node{node.node_id}.json")
            dump_ledger(node.ledger, path + ".tmp", node.node_id)
            os.replace(path + ".tmp", path)


def cell_summary(run: CellRun) -> dict:
    return {
        "cell": run.name,
        "consensus": run.consensus,
        "itr": run.itr,
        "round": run.round,
        "workload_seed": run.workload_seed,
        "network_seed": run.network_seed,
        "height": run.nodes[0].ledger.height,
        "empty_blocks": run.recorder.empty_blocks,
        "tip_hash": run.tips[0] if run.tips else None,
        "tips_agree": run.tips_agree,
        "metrics": {fn: {k: getattr(m, k) for k in METRIC_FIELDS} for fn, m in run.metrics.items()},
    }


def _execute(job) -> dict:
    cfg, consensus, itr, round_name, seed, out_dir, trace = job
    run = run_cell(cfg, consensus, itr, round_name, seed, trace=trace)
    if out_dir is not None:
        write_cell_files(run, out_dir, trace)
    return cell_summary(run)


@dataclass
class Report:
    seed: int
    cells: list = field(default_factory=list)

    def rows(self):
        for cell in self.cells:
            for fn in (*FUNCTIONS, OVERALL):
                if fn in cell["metrics"]:
                    yield {"consensus": cell["consensus"], "round": cell["round"], "itr": cell["itr"],
                           "function": fn, **cell["metrics"][fn], "tip_hash": cell["tip_hash"],
                           "tips_agree": cell["tips_agree"]}

    def cell(self, consensus: str, itr: float, round_name: str) -> dict:
        for c in self.cells:
            if (c["consensus"], c["itr"], c["round"]) == (consensus, itr, round_name):
                return c
        raise KeyError((consensus, itr, round_name))

    def to_json(self) -> str:
        doc = {"format": REPORT_FORMAT, "seed": self.seed, "cells": self.cells, "rows": list(self.rows())}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({k: ("" if row[k] is None else repr(row[k]) if isinstance(row[k], float) else row[k])
                        for k in CSV_FIELDS})
        return buf.getvalue()

    def series_csv(self, metric: str) -> str:
        """Wide table: one row per (round, function, itr), one column per consensus."""
        consensus = sorted({c["consensus"] for c in self.cells}, key=["raft", "ibft"].index)
        table: dict = {}
        for row in self.rows():
            table.setdefault((row["round"], row["function"], row["itr"]), {})[row["consensus"]] = row[metric]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "function", "itr", *consensus])
        for (rnd, fn, itr), vals in table.items():
            w.writerow([rnd, fn, repr(itr), *("" if vals.get(c) is None else repr(vals.get(c)) for c in consensus)])
        return buf.getvalue()

    def write(self, out_dir: str) -> None:
        write_atomic(os.path.join(out_dir, "report.json"), self.to_json())
        write_atomic(os.path.join(out_dir, "report.csv"), self.to_csv())
        for metric in SERIES:
            write_atomic(os.path.join(out_dir, "series", f"{metric}.csv"), self.series_csv(metric))


def run_experiment(cfg, seed: int, out_dir: str | None = None, trace: bool = False, jobs: int = 1) -> Report:
    cfg.validate()
    jobs_list = [(cfg, c, float(itr), r, seed, out_dir, trace)
                 for c in cfg.consensus for r in cfg.rounds for itr in cfg.itrs]
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_execute, jobs_list))
    else:
        cells = [_execute(job) for job in jobs_list]
    report = Report(seed, cells)
    if out_dir is not None:
        report.write(out_dir)
    return report
