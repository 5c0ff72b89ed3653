"""Client-side proxy: signs requests, broadcasts them, and votes on replies.

The proxy accepts a result once f+1 replicas returned the same bytes, which
guarantees at least one correct replica vouches for it. Requests are
retransmitted with the same transaction id until accepted; the replicas'
deduplication makes that idempotent.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .. import crypto
from ..core import ZERO_HASH, ClusterConfig, Transaction, reply_payload, request_payload
from ..netsim.runtime import client_address
from ..wire import Reply, Request


class ProxyError(RuntimeError):
    pass


class Unavailable(ProxyError):
    """No f+1 matching replies before the deadline."""


class ReplyDivergence(ProxyError):
    """Every replica answered and no result reached f+1 matches."""


ACCEPTED = "accepted"
UNAVAILABLE = "unavailable"
DIVERGENT = "divergent"


@dataclass
class Outcome:
    tx: Transaction
    submit_ns: int
    accept_ns: int | None = None
    result: bytes | None = None
    status: str = "pending"
    replies: dict[int, bytes] = field(default_factory=dict)

    @property
    def latency_ms(self) -> float | None:
        if self.accept_ns is None:
            return None
        return (self.accept_ns - self.submit_ns) / 1e6

    @property
    def done(self) -> bool:
        return self.status != "pending"


@dataclass
class LoadSpec:
    """Open-loop arrivals every ``interval`` seconds, at most ``window`` outstanding.

    ``interval=0`` with ``window=1`` is a closed loop: the next request goes
    out as soon as the previous one is accepted.
    """

    count: int
    interval: float = 0.0
    window: int = 1
    payload: bytes = b""


class Proxy:
    def __init__(
        self,
        client_id: int,
        key: crypto.KeyPair,
        config: ClusterConfig,
        *,
        retransmit: float = 0.5,
        deadline: float = 30.0,
        chain: bool = False,
    ):
        self.client_id = client_id
        self.address = client_address(client_id)
        self.key = key
        self.config = config
        self.retransmit = retransmit
        self.deadline = deadline
        self.chain = chain
        self.net = None
        self.meter = crypto.CostMeter()
        self.next_tx_id = 1
        self.prev_hash = ZERO_HASH
        self.pending: dict[int, Outcome] = {}
        self.outcomes: dict[int, Outcome] = {}
        self.first_submit_ns: int | None = None
        self.last_accept_ns: int | None = None
        self._requests: dict[int, Request] = {}
        self._events: dict[int, threading.Event] = {}
        self._load: LoadSpec | None = None
        self._load_sent = 0
        self._load_due = 0
        self._load_origin: int | None = None

    # -- node plumbing -----------------------------------------------------------------------

    def attach(self, net, meter) -> None:
        self.net = net
        self.meter = meter

    def start(self) -> None:
        if self._load is not None:
            self._load_tick()

    def describe(self) -> str:
        return f"Proxy client={self.client_id} pending={sorted(self.pending)} accepted={self.accepted}"

    @property
    def accepted(self) -> int:
        return sum(1 for o in self.outcomes.values() if o.status == ACCEPTED)

    @property
    def f(self) -> int:
        return self.config.f

    # -- submission ------------------------------------------------------------------------------

    def _new_tx(self, payload: bytes) -> Transaction:
        tx = Transaction(self.client_id, self.next_tx_id, self.prev_hash, payload)
        self.next_tx_id += 1
        if self.chain:
            self.prev_hash = crypto.digest(tx.encode())
        return tx

    def send_tx(self, payload: bytes) -> Transaction:
        """Create, sign and broadcast a transaction. Must run on the proxy's event loop."""
        tx = self._new_tx(payload)
        self._dispatch(tx)
        return tx

    def _dispatch(self, tx: Transaction) -> None:
        now = self.net.now(self.address)
        sig = self.meter.sign(self.key, request_payload(tx), label="request")
        req = Request(self.client_id, tx, sig)
        outcome = Outcome(tx, submit_ns=now)
        self.pending[tx.tx_id] = outcome
        self.outcomes[tx.tx_id] = outcome
        self._requests[tx.tx_id] = req
        if self.first_submit_ns is None:
            self.first_submit_ns = now
        self._broadcast(req)
        self.net.set_timer(self.address, ("retx", tx.tx_id), int(self.retransmit * 1e9))
        self.net.set_timer(self.address, ("deadline", tx.tx_id), int(self.deadline * 1e9))

    def _broadcast(self, req: Request) -> None:
        for r in range(self.config.n_replicas):
            self.net.send(self.address, r, req)

    def submit_async(self, payload: bytes) -> int:
        """Queue a submission on the proxy's event loop; returns the tx id it will get."""
        tx = self._new_tx(payload)
        self._events[tx.tx_id] = threading.Event()
        self.net.call(self.address, lambda: self._dispatch(tx))
        return tx.tx_id

    def submit(self, payload: bytes, timeout: float | None = None) -> bytes:
        """Submit one command and block until it is accepted; returns the agreed result."""
        tx_id = self.submit_async(payload)
        limit = timeout if timeout is not None else self.deadline + 1.0
        if self.net.mode == "virtual":
            end = self.net.time_ns / 1e9 + limit
            self.net.run(until=lambda: tx_id in self.outcomes and self.outcomes[tx_id].done, max_time=end)
        else:
            self._events[tx_id].wait(limit)
        outcome = self.outcomes.get(tx_id)
        if outcome is None or outcome.status in ("pending", UNAVAILABLE):
            raise Unavailable(f"client {self.client_id}: no f+1 matching replies for tx {tx_id}")
        if outcome.status == DIVERGENT:
            raise ReplyDivergence(f"client {self.client_id}: replies for tx {tx_id} diverge: {outcome.replies}")
        return outcome.result

    # -- load generation -----------------------------------------------------------------------------

    def set_load(self, spec: LoadSpec) -> None:
        if spec.count < 0 or spec.window < 1 or spec.interval < 0:
            raise ValueError("load needs count >= 0, window >= 1, interval >= 0")
        self._load = spec

    @property
    def load_done(self) -> bool:
        spec = self._load
        if spec is None:
            return not self.pending
        return self._load_sent >= spec.count and not self.pending

    def _load_tick(self) -> None:
        spec = self._load
        if self._load_sent + self._load_due >= spec.count:
            return
        if spec.interval > 0:
            # arrivals on a fixed grid from the first one, independent of handler cost
            now = self.net.now(self.address)
            if self._load_origin is None:
                self._load_origin = now
            self._load_due += 1
            issued = self._load_sent + self._load_due
            if issued < spec.count:
                target = self._load_origin + int(round(issued * spec.interval * 1e9))
                self.net.set_timer(self.address, ("load",), max(0, target - now))
        else:
            self._load_due = spec.count - self._load_sent
        self._drain_load()

    def _drain_load(self) -> None:
        spec = self._load
        while self._load_due > 0 and len(self.pending) < spec.window:
            self._load_due -= 1
            self.send_tx(spec.payload)
            # counted only once pending, so load_done never flickers true in between
            self._load_sent += 1

    # -- replies -----------------------------------------------------------------------------------

    def on_message(self, src: int, msg) -> None:
        if not isinstance(msg, Reply) or msg.sender != src or msg.client_id != self.client_id:
            return
        outcome = self.pending.get(msg.tx_id)
        if outcome is None or src in outcome.replies or not 0 <= src < self.config.n_replicas:
            return
        payload = reply_payload(msg.client_id, msg.tx_id, msg.result)
        if not self.meter.verify(self.config.replica_keys[src], payload, msg.signature):
            return
        outcome.replies[src] = msg.result
        matching = sum(1 for r in outcome.replies.values() if r == msg.result)
        if matching >= self.f + 1:
            outcome.result = msg.result
            outcome.accept_ns = self.net.now(self.address)
            self.last_accept_ns = outcome.accept_ns
            self._finish(msg.tx_id, ACCEPTED)
        elif len(outcome.replies) == self.config.n_replicas:
            self._finish(msg.tx_id, DIVERGENT)

    def _finish(self, tx_id: int, status: str) -> None:
        outcome = self.pending.pop(tx_id)
        outcome.status = status
        self._requests.pop(tx_id, None)
        self.net.cancel_timer(self.address, ("retx", tx_id))
        self.net.cancel_timer(self.address, ("deadline", tx_id))
        event = self._events.pop(tx_id, None)
        if event is not None:
            event.set()
        if self._load is not None:
            self._drain_load()

    def on_timer(self, key) -> None:
        kind = key[0]
        if kind == "load":
            self._load_tick()
        elif kind == "retx":
            req = self._requests.get(key[1])
            if req is not None:
                self._broadcast(req)
                self.net.set_timer(self.address, key, int(self.retransmit * 1e9))
        elif kind == "deadline" and key[1] in self.pending:
            self._finish(key[1], UNAVAILABLE)
