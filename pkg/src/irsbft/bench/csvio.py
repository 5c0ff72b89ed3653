from __future__ import annotations

import csv
import os
from pathlib import Path

from .experiments import LatencySample, RunSummary

LATENCY_HEADER = ("protocol", "preset", "payload_b", "repetition", "view", "tx_id", "submit_ns", "accept_ns", "latency_ms")
CURVE_HEADER = ("protocol", "preset", "delay_us", "offered_ops_s", "throughput_kops_s", "mean_latency_ms", "p95_latency_ms")


def _latency_row(s: LatencySample) -> list:
    return [s.protocol, s.preset, s.payload_b, s.repetition, s.view, s.tx_id, s.submit_ns, s.accept_ns, f"{s.latency_ms:.6f}"]


def _curve_row(point) -> list:
    offered, r = point if isinstance(point, tuple) else (point.offered_ops_s, point)
    offered_text = "inf" if offered == float("inf") else f"{offered:.3f}"
    return [
        r.protocol,
        r.preset,
        f"{r.delay_us:g}",
        offered_text,
        f"{r.throughput_kops_s:.6f}",
        f"{r.mean_latency_ms:.6f}",
        f"{r.p95_latency_ms:.6f}",
    ]


def write_csv(items, path: str | os.PathLike, kind: str | None = None) -> Path:
    """Write latency samples or curve points (``(offered, RunSummary)`` pairs).

    ``kind`` ("latency" or "curve") is inferred from the first item; an empty
    input writes just the latency header unless ``kind`` says otherwise.
    """
    items = list(items)
    if kind is None:
        kind = "latency" if not items or isinstance(items[0], LatencySample) else "curve"
    if kind == "latency":
        header, row = LATENCY_HEADER, _latency_row
        items = sorted(items, key=lambda s: (s.repetition, s.tx_id, s.submit_ns))
    elif kind == "curve":
        header, row = CURVE_HEADER, _curve_row
    else:
        raise ValueError(f"unknown CSV kind {kind!r}")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for item in items:
            w.writerow(row(item))
    return path


def read_rows(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary_text(summary: RunSummary) -> str:
    return (
        f"{summary.protocol} {summary.preset}: n={summary.instances} mean={summary.mean_latency_ms:.3f} ms "
        f"median={summary.median_latency_ms:.3f} ms p95={summary.p95_latency_ms:.3f} ms "
        f"throughput={summary.throughput_kops_s:.3f} Kops/s"
    )
