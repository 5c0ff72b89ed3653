"""Benchmark harness reproducing the latency and scalability experiments."""

from .csvio import CURVE_HEADER, LATENCY_HEADER, read_rows, summary_text, write_csv
from .experiments import (
    FAULT_PROFILES,
    SWEEP_DELAYS_US,
    LATENCY_PAYLOADS,
    ExperimentConfig,
    FaultReport,
    LatencySample,
    RunSummary,
    offered_load,
    run_fault_scenario,
    run_latency_experiment,
    run_scalability_experiment,
    summarize,
)

__all__ = [
    "CURVE_HEADER",
    "ExperimentConfig",
    "FAULT_PROFILES",
    "FaultReport",
    "LATENCY_HEADER",
    "LatencySample",
    "SWEEP_DELAYS_US",
    "LATENCY_PAYLOADS",
    "RunSummary",
    "offered_load",
    "read_rows",
    "run_fault_scenario",
    "run_latency_experiment",
    "run_scalability_experiment",
    "summarize",
    "summary_text",
    "write_csv",
]
