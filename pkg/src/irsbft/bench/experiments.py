"""Latency, scalability and fault-injection experiments over a simulated cluster."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import crypto
from ..cluster import Cluster
from ..consensus import FaultMode, FaultProfile
from ..core import ConfigError, Protocol
from ..irs.proxy import ACCEPTED, LoadSpec
from ..netsim.config import CLOCK_MODES, NetConfig

SWEEP_DELAYS_US = (900, 700, 500, 100, 50, 10, 5, 0)
LATENCY_PAYLOADS = (8, 128, 1024)


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: Protocol = Protocol.HOTSTUFF
    preset: str = "10BASE-T1"
    payload_bytes: int = 8
    batch_size: int = 1
    n_clients: int = 1
    inter_request_delay_us: float = 0.0
    repetitions: int = 10
    views_per_repetition: int = 30
    seed: int = 0
    clock_mode: str = "virtual"
    propagation_ms: float = 0.4
    bandwidth_override_mbps: float | None = None
    jitter_us: float = 0.0
    f: int = 1
    timeout_base: float = 0.100
    # scalability knobs
    requests_per_client: int = 2000
    window: int = 200
    # crypto charged by the virtual clock; None means the reference constants
    costs: crypto.CryptoCosts | None = None

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol.parse(self.protocol))
        if self.clock_mode not in CLOCK_MODES:
            raise ConfigError(f"clock mode must be one of {CLOCK_MODES}, got {self.clock_mode!r}")
        for name in ("batch_size", "n_clients", "repetitions", "views_per_repetition", "requests_per_client", "window"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.payload_bytes < 0 or self.inter_request_delay_us < 0:
            raise ConfigError("payload and delay must be non-negative")
        self.net_config()  # validates preset and link numbers

    @property
    def instances(self) -> int:
        return self.repetitions * self.views_per_repetition

    def net_config(self, seed: int | None = None) -> NetConfig:
        return NetConfig(
            preset=self.preset,
            propagation_ms=self.propagation_ms,
            bandwidth_override_mbps=self.bandwidth_override_mbps,
            seed=self.seed if seed is None else seed,
            clock_mode=self.clock_mode,
            jitter_us=self.jitter_us,
        )

    @property
    def effective_costs(self) -> crypto.CryptoCosts:
        return self.costs if self.costs is not None else crypto.REFERENCE_COSTS


@dataclass(frozen=True)
class LatencySample:
    protocol: str
    preset: str
    payload_b: int
    repetition: int
    view: int
    tx_id: int
    submit_ns: int
    accept_ns: int

    @property
    def latency_ms(self) -> float:
        return (self.accept_ns - self.submit_ns) / 1e6


@dataclass
class RunSummary:
    protocol: str
    preset: str
    instances: int
    mean_latency_ms: float
    median_latency_ms: float
    p95_latency_ms: float
    throughput_kops_s: float
    delay_us: float | None = None
    offered_ops_s: float | None = None
    samples: list[LatencySample] = field(default_factory=list, repr=False)


def summarize(protocol: str, preset: str, samples: list[LatencySample], elapsed_ns: int | None = None, **extra) -> RunSummary:
    lat = np.array([s.latency_ms for s in samples], dtype=float)
    if elapsed_ns is None and samples:
        elapsed_ns = max(s.accept_ns for s in samples) - min(s.submit_ns for s in samples)
    throughput = len(samples) / (elapsed_ns / 1e9) / 1e3 if samples and elapsed_ns else 0.0
    if lat.size == 0:
        mean = median = p95 = math.nan
    else:
        mean, median, p95 = float(lat.mean()), float(np.median(lat)), float(np.percentile(lat, 95))
    return RunSummary(protocol, preset, len(samples), mean, median, p95, throughput, samples=samples, **extra)


def _cluster(config: ExperimentConfig, seed: int, *, batch: int, clients: int, faults=None, trace: bool = False) -> Cluster:
    return Cluster(
        config.protocol,
        config.f,
        net=config.net_config(seed),
        costs=config.effective_costs,
        n_clients=clients,
        batch_size=batch,
        timeout_base=config.timeout_base,
        faults=faults,
        trace=trace,
    )


def _tx_views(cluster: Cluster) -> dict[tuple[int, int], int]:
    ref = max(cluster.correct_replicas, key=lambda r: r.height)
    return {tx.key: block.view for block in ref.chain for tx in block.transactions}


def _collect(cluster: Cluster, config: ExperimentConfig, repetition: int) -> list[LatencySample]:
    views = _tx_views(cluster)
    out = []
    for proxy in cluster.proxies:
        for tx_id in sorted(proxy.outcomes):
            o = proxy.outcomes[tx_id]
            if o.status != ACCEPTED:
                continue
            out.append(
                LatencySample(
                    config.protocol.value,
                    config.preset,
                    config.payload_bytes,
                    repetition,
                    views.get(o.tx.key, 0),
                    tx_id,
                    o.submit_ns,
                    o.accept_ns,
                )
            )
    return out


def _drive(cluster: Cluster, max_time: float) -> None:
    """Run until every proxy finished its load, then check safety."""
    try:
        cluster.run_until(lambda: all(p.load_done for p in cluster.proxies), max_time=max_time)
        cluster.check_safety()
    finally:
        cluster.close()
    unfinished = [p.client_id for p in cluster.proxies if not p.load_done]
    if unfinished:
        raise RuntimeError(f"clients {unfinished} did not finish within {max_time} s\n{cluster.describe()}")


def run_latency_experiment(config: ExperimentConfig) -> RunSummary:
    """Minimal load: one client, one transaction per block, next request after each accept.

    Every repetition uses a fresh cluster seeded with ``seed + repetition``.
    Raises SafetyViolation if correct replicas ever diverge.
    """
    if config.batch_size != 1 or config.n_clients != 1:
        raise ConfigError("the latency experiment uses batch_size=1 and a single client")
    samples: list[LatencySample] = []
    for rep in range(config.repetitions):
        cluster = _cluster(config, config.seed + rep, batch=1, clients=1)
        cluster.proxy().set_load(LoadSpec(config.views_per_repetition, 0.0, 1, bytes(config.payload_bytes)))
        _drive(cluster, max_time=60.0 + config.views_per_repetition)
        samples.extend(_collect(cluster, config, rep))
    return summarize(config.protocol.value, config.preset, samples)


def offered_load(n_clients: int, delay_us: float) -> float:
    """Requests per second the clients try to issue; infinite for back-to-back issuing."""
    return math.inf if delay_us == 0 else n_clients / (delay_us / 1e6)


def run_scalability_experiment(config: ExperimentConfig, delays_us=SWEEP_DELAYS_US) -> list[tuple[float, RunSummary]]:
    """Throughput-latency curve over the delay sweep.

    Each client issues ``requests_per_client`` transactions, one every
    ``delay`` microseconds, with at most ``window`` awaiting acceptance.
    Throughput is accepted transactions over (last accept - first submit).
    """
    curve = []
    for i, delay in enumerate(delays_us):
        cluster = _cluster(config, config.seed + i, batch=config.batch_size, clients=config.n_clients)
        for p in cluster.proxies:
            p.set_load(LoadSpec(config.requests_per_client, delay / 1e6, config.window, bytes(config.payload_bytes)))
        _drive(cluster, max_time=120.0 + config.requests_per_client * delay / 1e6)
        samples = _collect(cluster, replace(config, inter_request_delay_us=delay), 0)
        first = min(p.first_submit_ns for p in cluster.proxies)
        last = max(p.last_accept_ns for p in cluster.proxies)
        offered = offered_load(config.n_clients, delay)
        summary = summarize(config.protocol.value, config.preset, samples, last - first, delay_us=delay, offered_ops_s=offered)
        curve.append((offered, summary))
    return curve


# -- fault scenarios -----------------------------------------------------------------------


@dataclass
class FaultReport:
    protocol: str
    profile: str
    faulty_replica: int
    activation_view: int
    seed: int
    views_reached: int
    committed_height: int
    accepted: int
    safe: bool


def run_fault_scenario(
    protocol: Protocol | str,
    profile: FaultProfile,
    *,
    faulty_replica: int = 0,
    views: int = 30,
    seed: int = 0,
    preset: str = "100BASE-T1",
    jitter_us: float = 0.0,
    costs: crypto.CryptoCosts = crypto.ZERO_COSTS,
    timeout_base: float = 0.100,
    max_time: float = 600.0,
) -> FaultReport:
    """Closed-loop client traffic with one faulty replica until ``views`` views have passed.

    Raises SafetyViolation (a DivergenceError) if correct replicas diverge.
    """
    net = NetConfig(preset=preset, seed=seed, jitter_us=jitter_us)
    cluster = Cluster(protocol, 1, net=net, costs=costs, faults={faulty_replica: profile}, trace=False, timeout_base=timeout_base)
    proxy = cluster.proxy()
    correct = cluster.correct_replicas
    proxy.set_load(LoadSpec(10 * views, 0.0, 1, b"\x00" * 8))
    try:
        cluster.run_until(lambda: min(r.current_view for r in correct) > views, max_time=max_time)
        safe = cluster.check_safety()
    finally:
        cluster.close()
    return FaultReport(
        cluster.protocol.value,
        profile.mode.value,
        faulty_replica,
        profile.activation_view,
        seed,
        min(r.current_view for r in correct),
        cluster.committed_height(),
        proxy.accepted,
        safe,
    )


FAULT_PROFILES = {
    "correct": FaultProfile(FaultMode.CORRECT),
    "crash": FaultProfile(FaultMode.CRASH),
    "silent": FaultProfile(FaultMode.SILENT),
    "equivocate": FaultProfile(FaultMode.EQUIVOCATE),
    "delay": FaultProfile(FaultMode.DELAY, delay=0.050),
}
