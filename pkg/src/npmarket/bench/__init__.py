"""Fixed-rate benchmark harness."""
from .experiment import Report, run_cell, run_experiment
from .metrics import (RoundMetrics, TxRecord, compute_latency, compute_success_rate, compute_throughput,
                      round_metrics)
from .workload import WorkloadSpec, generate

__all__ = ["Report", "RoundMetrics", "TxRecord", "WorkloadSpec", "compute_latency", "compute_success_rate",
           "compute_throughput", "generate", "round_metrics", "run_cell", "run_experiment"]
