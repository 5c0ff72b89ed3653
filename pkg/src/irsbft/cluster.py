"""Assemble replicas, trusted components, proxies and a network into one cluster."""

from __future__ import annotations

from typing import Callable

from . import crypto
from .consensus import REPLICA_CLASSES, CORRECT, DivergenceError, FaultProfile
from .core import ClusterConfig, ConfigError, Protocol, min_replicas
from .irs.apps import AppRegistry, StateMachine
from .irs.proxy import Proxy
from .netsim.config import NetConfig
from .netsim.runtime import make_network
from .trusted import TrustedComponent


class SafetyViolation(DivergenceError):
    """Two correct replicas committed different blocks at the same height."""


class Cluster:
    """A complete simulated deployment.

    Keys are derived deterministically from ``seed``, so two clusters built
    with the same arguments behave identically under the virtual clock.
    """

    def __init__(
        self,
        protocol: Protocol | str,
        f: int = 1,
        *,
        n_replicas: int | None = None,
        net: NetConfig | None = None,
        seed: int | None = None,
        mode: str | None = None,
        costs: crypto.CryptoCosts = crypto.ZERO_COSTS,
        n_clients: int = 1,
        batch_size: int = 1,
        timeout_base: float = 0.100,
        faults: dict[int, FaultProfile] | None = None,
        trace: bool = True,
        retransmit: float = 0.5,
        deadline: float = 30.0,
    ):
        self.protocol = Protocol.parse(protocol)
        self.net_config = net or NetConfig()
        self.seed = self.net_config.seed if seed is None else seed
        self.mode = mode or self.net_config.clock_mode
        n = n_replicas if n_replicas is not None else min_replicas(self.protocol, f)
        if n_clients < 1:
            raise ConfigError("need at least one client")

        self.replica_keys = [crypto.gen_keypair(crypto.derive_seed(self.seed, "replica", i)) for i in range(n)]
        self.client_keys = [crypto.gen_keypair(crypto.derive_seed(self.seed, "client", c)) for c in range(n_clients)]
        checker_seeds = [crypto.derive_seed(self.seed, "checker", i) for i in range(n)]
        checker_keys = ()
        if self.protocol is Protocol.HYBRID:
            checker_keys = tuple(crypto.gen_keypair(s).public_key for s in checker_seeds)
        self.config = ClusterConfig(
            protocol=self.protocol,
            n_replicas=n,
            f=f,
            replica_keys=tuple(k.public_key for k in self.replica_keys),
            checker_keys=checker_keys,
            client_keys={c: k.public_key for c, k in enumerate(self.client_keys)},
            preset=self.net_config.preset,
            timeout_base=timeout_base,
            batch_size=batch_size,
        )

        self.net = make_network(
            self.mode,
            self.net_config.link(),
            seed=self.seed,
            jitter=self.net_config.jitter_us / 1e6,
            costs=costs,
            trace=trace,
        )
        faults = faults or {}
        cls = REPLICA_CLASSES[self.protocol]
        self.replicas = []
        for i in range(n):
            kw = {"apps": AppRegistry(), "fault": faults.get(i, CORRECT)}
            if self.protocol is Protocol.HYBRID:
                replica = cls(i, self.config, self.replica_keys[i], TrustedComponent(i, checker_seeds[i], checker_keys, f), **kw)
            else:
                replica = cls(i, self.config, self.replica_keys[i], **kw)
            self.replicas.append(replica)
            self.net.add_node(replica)
        self.proxies = [
            Proxy(c, self.client_keys[c], self.config, retransmit=retransmit, deadline=deadline) for c in range(n_clients)
        ]
        for p in self.proxies:
            self.net.add_node(p)
        self.started = False

    # -- set-up ---------------------------------------------------------------------------

    def register_app(self, factory: Callable[[], StateMachine]) -> int:
        """Give every replica its own instance of the app built by ``factory``."""
        app_id = None
        for r in self.replicas:
            app_id = r.apps.register(factory())
        return app_id

    def proxy(self, client_id: int = 0) -> Proxy:
        return self.proxies[client_id]

    def start(self) -> None:
        if not self.started:
            self.started = True
            self.net.start()

    # -- running ----------------------------------------------------------------------------------

    def run_until(self, predicate: Callable[[], bool], max_time: float | None = None):
        self.start()
        return self.net.run(until=predicate, max_time=max_time)

    def submit(self, payload: bytes, client_id: int = 0, timeout: float | None = None) -> bytes:
        self.start()
        return self.proxies[client_id].submit(payload, timeout=timeout)

    def close(self) -> None:
        self.net.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- inspection ----------------------------------------------------------------------------------

    @property
    def correct_replicas(self) -> list:
        return [r for r in self.replicas if not r.fault.byzantine]

    def committed_height(self) -> int:
        """Height every correct replica has reached."""
        return min(r.height for r in self.correct_replicas)

    def check_safety(self) -> bool:
        """Raise SafetyViolation unless all correct replicas agree on every committed height."""
        replicas = self.correct_replicas
        longest = max(replicas, key=lambda r: r.height)
        for r in replicas:
            for height, block in enumerate(r.chain):
                if block.hash != longest.chain[height].hash:
                    raise SafetyViolation(
                        f"replicas {r.id} and {longest.id} committed different blocks at height {height}"
                    )
            for a, b in zip(r.executed, longest.executed):
                if a != b:
                    raise SafetyViolation(f"replicas {r.id} and {longest.id} executed different results for {a[0].key}")
        return True

    def describe(self) -> str:
        return self.net.describe_nodes()
