"""Recount report metrics straight from the per-cell transaction logs.

Deliberately shares no code with the bench metrics so that it can catch
mistakes there. Usage: ``python -m npmarket.recount OUT_DIR``.
"""
from __future__ import annotations

import json
import os
import sys

PLACES = 6
CHECKED = ("throughput_tps", "latency_min_s", "latency_avg_s", "latency_max_s", "success_rate")


def recount_txlog(path: str) -> dict:
    meta, submitted, confirmed = None, {}, {}
    with open(path) as fh:
        for line in fh:
            ev = json.loads(line)
            if ev["type"] == "meta":
                meta = ev
            elif ev["type"] == "submit":
                submitted[ev["tx_id"]] = ev
            elif ev["type"] == "confirm":
                confirmed.setdefault(ev["tx_id"], ev)
    if meta is None:
        raise ValueError(f"{path}: no meta line")
    deadline = meta["tx_timeout_s"] * 1000.0
    ok = {}
    for tx_id, c in confirmed.items():
        sub = submitted[tx_id]
        if c["status"] == "success" and c["t"] - sub["t"] <= deadline:
            ok[tx_id] = (c["t"] - sub["t"]) / 1000.0
    if not submitted:
        return {}
    start = min(s["t"] for s in submitted.values())
    end = start + meta["duration_s"] * 1000.0
    for tx_id in ok:
        end = max(end, confirmed[tx_id]["t"])
    span = (end - start) / 1000.0

    groups = {"all": list(submitted)}
    for tx_id, s in submitted.items():
        groups.setdefault(s["function"], []).append(tx_id)
    out = {}
    for name, ids in groups.items():
        lat = [ok[i] for i in ids if i in ok]
        out[name] = {
            "throughput_tps": len(lat) / span if lat and span > 0 else 0.0,
            "latency_min_s": min(lat) if lat else None,
            "latency_avg_s": sum(lat) / len(lat) if lat else None,
            "latency_max_s": max(lat) if lat else None,
            "success_rate": len(lat) / len(ids),
        }
    return out


def _same(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return round(a, PLACES) == round(b, PLACES) or abs(a - b) < 10 ** -PLACES / 2


def compare(out_dir: str) -> list[str]:
    """Mismatches between report.json and the recounted transaction logs."""
    with open(os.path.join(out_dir, "report.json")) as fh:
        report = json.load(fh)
    problems = []
    for cell in report["cells"]:
        path = os.path.join(out_dir, "cells", cell["cell"], "txlog.jsonl")
        if not os.path.exists(path):
            problems.append(f"{cell['cell']}: missing {path}")
            continue
        mine = recount_txlog(path)
        if set(mine) != set(cell["metrics"]):
            problems.append(f"{cell['cell']}: functions {sorted(mine)} != {sorted(cell['metrics'])}")
            continue
        for fn, values in mine.items():
            for key in CHECKED:
                if not _same(values[key], cell["metrics"][fn][key]):
                    problems.append(f"{cell['cell']} {fn} {key}: recount {values[key]} "
                                    f"!= report {cell['metrics'][fn][key]}")
    return problems


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m npmarket.recount OUT_DIR", file=sys.stderr)
        return 2
    try:
        problems = compare(argv[0])
    except (OSError, ValueError, KeyError) as exc:
        print(f"recount: {exc}", file=sys.stderr)
        return 2
    for p in problems:
        print(p)
    print("recount: OK" if not problems else f"recount: {len(problems)} mismatch(es)")
    return 1 if problems else 0


if __name__ == "__main__":
    sys.exit(main())
