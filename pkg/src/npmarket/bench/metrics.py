"""Round metrics: throughput, latency and success rate per contract function."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Optional

from ..chain import FUNCTIONS, Status

OVERALL = "all"


class NotCommitted(ValueError):
    pass


class EmptyRoundWarning(UserWarning):
    pass


@dataclass
class TxRecord:
    """What the workload driver saw for one transaction."""

    tx_id: int
    function: str
    node: int
    submit_time: float  # ms
    status: Status = Status.TIMED_OUT
    reason: Optional[str] = None
    confirm_time: Optional[float] = None  # ms, when the submitting node applied it


@dataclass
class RoundMetrics:
    function: str
    injected: int
    committed: int
    failed: int
    reverted: int
    timed_out: int
    throughput_tps: float
    latency_min_s: Optional[float]
    latency_avg_s: Optional[float]
    latency_max_s: Optional[float]
    success_rate: float

    def to_dict(self) -> dict:
        return asdict(self)


def resolve(record: TxRecord, timeout_ms: float) -> TxRecord:
    """Confirmations later than the deadline count as timeouts."""
    if record.confirm_time is not None and record.confirm_time - record.submit_time > timeout_ms:
        record.status = Status.TIMED_OUT
    return record


def round_span_s(records, duration_s: float) -> float:
    """Seconds from the first submission to the end of the round.

    The round ends at the last confirmation, but never before the injection
    window closes, so a round that drains instantly cannot report more than
    the offered rate.
    """
    if not records:
        return 0.0
    first = min(r.submit_time for r in records)
    confirms = [r.confirm_time for r in records if r.status is Status.SUCCESS]
    end = max([first + duration_s * 1000.0, *confirms])
    return (end - first) / 1000.0


def compute_throughput(records, span_s: float) -> float:
    committed = sum(1 for r in records if r.status is Status.SUCCESS)
    if committed == 0 or span_s <= 0:
        warnings.warn("round committed no transactions; throughput reported as 0", EmptyRoundWarning)
        return 0.0
    return committed / span_s


def compute_latency(record: TxRecord) -> float:
    if record.status is not Status.SUCCESS:
        raise NotCommitted(f"tx {record.tx_id} is {record.status.value}")
    return (record.confirm_time - record.submit_time) / 1000.0


def compute_success_rate(records) -> float:
    records = list(records)
    if not records:
        return 0.0
    return sum(1 for r in records if r.status is Status.SUCCESS) / len(records)


def summarize(function: str, records, span_s: float) -> RoundMetrics:
    records = list(records)
    committed = [r for r in records if r.status is Status.SUCCESS]
    latencies = [compute_latency(r) for r in committed]
    reverted = sum(1 for r in records if r.status is Status.REVERTED)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyRoundWarning)
        tps = compute_throughput(records, span_s)
    return RoundMetrics(
        function=function,
        injected=len(records),
        committed=len(committed),
        failed=len(records) - len(committed),
        reverted=reverted,
        timed_out=len(records) - len(committed) - reverted,
        throughput_tps=tps,
        latency_min_s=min(latencies) if latencies else None,
        latency_avg_s=sum(latencies) / len(latencies) if latencies else None,
        latency_max_s=max(latencies) if latencies else None,
        success_rate=compute_success_rate(records),
    )


def round_metrics(records, duration_s: float) -> dict[str, RoundMetrics]:
    """Metrics for every function present in the round plus the overall row."""
    records = list(records)
    span = round_span_s(records, duration_s)
    out = {}
    for fn in FUNCTIONS:
        mine = [r for r in records if r.function == fn]
        if mine:
            out[fn] = summarize(fn, mine, span)
    out[OVERALL] = summarize(OVERALL, records, span)
    return out
