"""Minimal-load latency for both protocols over the three automotive Ethernet presets.

Each cell is 10 repetitions x 30 views on the deterministic virtual clock,
with reference crypto costs charged per signature and verification.

Run:  python3 demos/03_latency_by_bandwidth.py [--wall]
"""

import sys

import numpy as np

from irsbft.bench.experiments import LATENCY_PAYLOADS, ExperimentConfig, run_latency_experiment

clock = "wall" if "--wall" in sys.argv else "virtual"
presets = ("10BASE-T1", "100BASE-T1", "1000BASE-T1")

table = np.zeros((2, len(LATENCY_PAYLOADS), len(presets)))
for i, protocol in enumerate(("hotstuff", "hybrid")):
    for j, payload in enumerate(LATENCY_PAYLOADS):
        for k, preset in enumerate(presets):
            cfg = ExperimentConfig(protocol, preset, payload, clock_mode=clock)
            table[i, j, k] = run_latency_experiment(cfg).mean_latency_ms

print(f"mean latency (ms), {clock} clock")
print(f"{'':22s}" + "".join(f"{p:>13s}" for p in presets))
for i, protocol in enumerate(("hotstuff", "hybrid")):
    for j, payload in enumerate(LATENCY_PAYLOADS):
        print(f"{protocol:9s} {payload:5d} B payload" + "".join(f"{x:13.3f}" for x in table[i, j]))

saving = 1 - table[1] / table[0]
print(f"hybrid is {saving.min():.0%}..{saving.max():.0%} faster across all cells")
