"""Throughput against offered load with 400-transaction batches and two clients.

A shortened version of the full sweep (500 requests per client instead of
2000) so it finishes in well under a minute. Writes one curve CSV per
protocol into ./demo-out.

Run:  python3 demos/04_throughput_curve.py [preset]
"""

import sys
from pathlib import Path

from irsbft.bench.csvio import write_csv
from irsbft.bench.experiments import SWEEP_DELAYS_US, ExperimentConfig, run_scalability_experiment

preset = sys.argv[1] if len(sys.argv) > 1 else "10BASE-T1"
out = Path("demo-out")
out.mkdir(exist_ok=True)

for protocol in ("hotstuff", "hybrid"):
    cfg = ExperimentConfig(protocol, preset, 0, batch_size=400, n_clients=2, requests_per_client=500)
    curve = run_scalability_experiment(cfg, SWEEP_DELAYS_US)
    path = write_csv(curve, out / f"curve_{protocol}_{preset}.csv")
    print(f"{protocol} on {preset} -> {path}")
    for offered, s in curve:
        bar = "#" * int(s.throughput_kops_s * 8)
        print(f"  delay {s.delay_us:4g} us  offered {offered:9.0f}/s  {s.throughput_kops_s:6.3f} Kops/s  {s.mean_latency_ms:7.2f} ms  {bar}")
