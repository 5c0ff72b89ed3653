"""Full-mesh transport with a deterministic virtual clock and a wall-clock mode.

Nodes are event-driven objects exposing ``address``, ``start()``,
``on_message(src, msg)``, ``on_timer(key)`` and ``describe()``. They talk to
the network only through ``send``, ``now``, ``set_timer``/``cancel_timer``
and ``record``; the same node code runs under either clock.

Every node has one NIC: its outgoing messages share the egress link and are
transmitted back to back. Delivery time is
``transmission start + transmission time + propagation (+ jitter)``, kept
FIFO per directed pair.
"""

from __future__ import annotations

import heapq
import itertools
import queue
import random
import sys
import threading
import time
import traceback
from typing import Callable

from .. import wire
from ..crypto import CostMeter, CryptoCosts, ZERO_COSTS
from .links import LinkModel, transmission_time
from .trace import Trace

CLIENT_ADDRESS_BASE = 1 << 32
SWITCH_INTERVAL = 50e-6


def client_address(client_id: int) -> int:
    return CLIENT_ADDRESS_BASE + client_id


def is_client_address(addr: int) -> bool:
    return addr >= CLIENT_ADDRESS_BASE


class RoutingError(Exception):
    pass


class DeadlockError(RuntimeError):
    pass


_DELIVER, _TIMER, _CALL = 0, 1, 2


class _NetworkBase:
    def __init__(self, link: LinkModel, *, seed: int = 0, jitter: float = 0.0, costs: CryptoCosts = ZERO_COSTS, trace: bool = True):
        self.link = link
        self.seed = seed
        self.jitter_ns = int(round(jitter * 1e9))
        self.rng = random.Random(seed)
        self.costs = costs
        self.trace = Trace(enabled=trace)
        self.nodes: dict[int, object] = {}
        self.meters: dict[int, CostMeter] = {}
        self._egress_free: dict[int, int] = {}
        self._last_delivery: dict[tuple[int, int], int] = {}
        self._prop_ns = int(round(link.propagation * 1e9))
        self._seq = itertools.count()
        self.bytes_sent: dict[int, int] = {}
        self.messages_sent = 0

    def add_node(self, node) -> CostMeter:
        addr = node.address
        if addr in self.nodes:
            raise RoutingError(f"address {addr} already registered")
        meter = CostMeter(self.costs)
        self.nodes[addr] = node
        self.meters[addr] = meter
        node.attach(self, meter)
        return meter

    def _route(self, src: int, dst: int, msg, ready_ns: int) -> tuple[bytes, int, int]:
        if src == dst:
            raise RoutingError(f"node {src} cannot send to itself")
        if dst not in self.nodes:
            raise RoutingError(f"unregistered destination {dst}")
        if src not in self.nodes:
            raise RoutingError(f"unregistered source {src}")
        data = wire.encode(msg)
        size = len(data)
        start = max(ready_ns, self._egress_free.get(src, 0))
        xmit = int(round(transmission_time(size, self.link) * 1e9))
        self._egress_free[src] = start + xmit
        deliver = start + xmit + self._prop_ns
        if self.jitter_ns:
            deliver += self.rng.randrange(self.jitter_ns + 1)
        pair = (src, dst)
        deliver = max(deliver, self._last_delivery.get(pair, 0))
        self._last_delivery[pair] = deliver
        self.messages_sent += 1
        self.bytes_sent[src] = self.bytes_sent.get(src, 0) + size
        if src < CLIENT_ADDRESS_BASE:
            kind, view, phase, block_hash = wire.describe(msg)
            self.trace.add(start, src, "send_" + kind, view, phase, block_hash, size)
        return data, start, deliver

    def _trace_recv(self, ts: int, dst: int, msg, size: int) -> None:
        if dst < CLIENT_ADDRESS_BASE and self.trace.enabled:
            kind, view, phase, block_hash = wire.describe(msg)
            self.trace.add(ts, dst, "recv_" + kind, view, phase, block_hash, size)

    def record(self, addr: int, event: str, view: int, phase: str, block_hash: bytes, size: int) -> None:
        self.trace.add(self.now(addr), addr, event, view, phase, block_hash, size)

    def describe_nodes(self) -> str:
        return "\n".join(f"  {addr}: {node.describe()}" for addr, node in sorted(self.nodes.items()))


class VirtualNetwork(_NetworkBase):
    """Single-threaded discrete-event scheduler over integer nanoseconds.

    A node is a single server: an event arriving while its previous handler's
    compute (crypto costs charged through its meter) is still running waits.
    Simultaneous events are ordered by (time, sender address, sequence).
    """

    mode = "virtual"

    def __init__(self, link: LinkModel, **kw):
        super().__init__(link, **kw)
        self._queue: list = []
        self._time = 0
        self._busy: dict[int, int] = {}
        self._timers: dict[tuple[int, object], int] = {}
        self._current: int | None = None
        self._handler_start = 0
        self.events_processed = 0

    @property
    def time_ns(self) -> int:
        return self._time

    def now(self, addr: int | None = None) -> int:
        if addr is not None and addr == self._current:
            return self._handler_start + int(round(self.meters[addr].elapsed * 1e9))
        return self._time

    def send(self, src: int, dst: int, msg, defer_ns: int = 0) -> int:
        data, _, deliver = self._route(src, dst, msg, self.now(src) + defer_ns)
        heapq.heappush(self._queue, (deliver, src, next(self._seq), _DELIVER, dst, (src, data)))
        return deliver

    def set_timer(self, addr: int, key, delay_ns: int) -> None:
        token = next(self._seq)
        self._timers[(addr, key)] = token
        heapq.heappush(self._queue, (self.now(addr) + delay_ns, addr, token, _TIMER, addr, (key, token)))

    def cancel_timer(self, addr: int, key) -> None:
        self._timers.pop((addr, key), None)

    def call(self, addr: int, fn: Callable[[], None], delay_ns: int = 0) -> None:
        """Run ``fn`` on ``addr``'s event loop (charged to that node)."""
        heapq.heappush(self._queue, (self._time + delay_ns, addr, next(self._seq), _CALL, addr, fn))

    def start(self) -> None:
        for addr in sorted(self.nodes):
            self._dispatch(addr, self._time, lambda n: n.start())

    def _dispatch(self, addr: int, t: int, action) -> None:
        meter = self.meters[addr]
        meter.elapsed = 0.0
        self._current = addr
        self._handler_start = t
        try:
            action(self.nodes[addr])
        finally:
            self._current = None
            self._busy[addr] = t + int(round(meter.elapsed * 1e9))

    def step(self) -> bool:
        while self._queue:
            t, order, seq, kind, addr, payload = heapq.heappop(self._queue)
            if kind == _TIMER:
                key, token = payload
                if self._timers.get((addr, key)) != token:
                    continue
            busy = self._busy.get(addr, 0)
            if busy > t:
                heapq.heappush(self._queue, (busy, order, seq, kind, addr, payload))
                continue
            self._time = t
            self.events_processed += 1
            if kind == _DELIVER:
                src, data = payload
                msg = wire.decode(data)
                self._trace_recv(t, addr, msg, len(data))
                self._dispatch(addr, t, lambda n: n.on_message(src, msg))
            elif kind == _TIMER:
                del self._timers[(addr, key)]
                self._dispatch(addr, t, lambda n: n.on_timer(key))
            else:
                self._dispatch(addr, t, lambda n: payload())
            return True
        return False

    def run(self, until: Callable[[], bool] | None = None, max_time: float | None = None, max_events: int | None = None) -> Trace:
        """Process events until ``until()`` holds, time passes ``max_time`` seconds, or the queue drains.

        Draining the queue while ``until`` is still false raises DeadlockError.
        """
        limit = None if max_time is None else int(round(max_time * 1e9))
        processed = 0
        while True:
            if until is not None and until():
                return self.trace
            if limit is not None and (not self._queue or self._queue[0][0] > limit):
                self._time = max(self._time, limit)
                return self.trace
            if max_events is not None and processed >= max_events:
                return self.trace
            if not self.step():
                if until is None:
                    return self.trace
                raise DeadlockError("no pending events and stop condition unmet; node states:\n" + self.describe_nodes())
            processed += 1

    def close(self) -> None:
        pass


class WallNetwork(_NetworkBase):
    """Real-time mode: one thread per node plus a dispatcher thread.

    Crypto is paid as actual compute; meters still count operations.
    """

    mode = "wall"

    def __init__(self, link: LinkModel, **kw):
        super().__init__(link, **kw)
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._heap: list = []
        self._timers: dict[tuple[int, object], int] = {}
        self._inboxes: dict[int, queue.SimpleQueue] = {}
        self._threads: list[threading.Thread] = []
        self._running = False
        self._progress = threading.Event()
        self._error: BaseException | None = None
        self._t0 = time.perf_counter_ns()
        self._switch_interval: float | None = None

    def now(self, addr: int | None = None) -> int:
        return time.perf_counter_ns() - self._t0

    @property
    def time_ns(self) -> int:
        return self.now()

    def send(self, src: int, dst: int, msg, defer_ns: int = 0) -> int:
        with self._lock:
            data, _, deliver = self._route(src, dst, msg, self.now() + defer_ns)
            heapq.heappush(self._heap, (deliver, src, next(self._seq), _DELIVER, dst, (src, data)))
            self._cond.notify()
        return deliver

    def set_timer(self, addr: int, key, delay_ns: int) -> None:
        with self._lock:
            token = next(self._seq)
            self._timers[(addr, key)] = token
            heapq.heappush(self._heap, (self.now() + delay_ns, addr, token, _TIMER, addr, (key, token)))
            self._cond.notify()

    def cancel_timer(self, addr: int, key) -> None:
        with self._lock:
            self._timers.pop((addr, key), None)

    def call(self, addr: int, fn: Callable[[], None], delay_ns: int = 0) -> None:
        if delay_ns:
            with self._lock:
                heapq.heappush(self._heap, (self.now() + delay_ns, addr, next(self._seq), _CALL, addr, fn))
                self._cond.notify()
        else:
            self._inboxes[addr].put((_CALL, fn))

    def record(self, addr: int, event: str, view: int, phase: str, block_hash: bytes, size: int) -> None:
        with self._lock:
            super().record(addr, event, view, phase, block_hash, size)

    def start(self) -> None:
        self._running = True
        # the default 5 ms GIL hand-off would dominate sub-millisecond hops
        self._switch_interval = sys.getswitchinterval()
        sys.setswitchinterval(SWITCH_INTERVAL)
        self._t0 = time.perf_counter_ns()
        for addr in sorted(self.nodes):
            self._inboxes[addr] = queue.SimpleQueue()
        for addr in sorted(self.nodes):
            th = threading.Thread(target=self._node_loop, args=(addr,), name=f"node-{addr}", daemon=True)
            self._threads.append(th)
            th.start()
        disp = threading.Thread(target=self._dispatch_loop, name="dispatcher", daemon=True)
        self._threads.append(disp)
        disp.start()
        for addr in sorted(self.nodes):
            self._inboxes[addr].put((_CALL, self.nodes[addr].start))

    def _dispatch_loop(self) -> None:
        with self._lock:
            while self._running:
                if not self._heap:
                    self._cond.wait(0.05)
                    continue
                t = self._heap[0][0]
                wait = (t - self.now()) / 1e9
                if wait > 0:
                    self._cond.wait(wait)
                    continue
                _, _, _, kind, addr, payload = heapq.heappop(self._heap)
                if kind == _TIMER:
                    key, token = payload
                    if self._timers.get((addr, key)) != token:
                        continue
                    del self._timers[(addr, key)]
                    self._inboxes[addr].put((_TIMER, key))
                else:
                    self._inboxes[addr].put((kind, payload))

    def _node_loop(self, addr: int) -> None:
        node = self.nodes[addr]
        inbox = self._inboxes[addr]
        while True:
            item = inbox.get()
            if item is None:
                return
            kind, payload = item
            try:
                if kind == _DELIVER:
                    src, data = payload
                    msg = wire.decode(data)
                    with self._lock:
                        self._trace_recv(self.now(), addr, msg, len(data))
                    node.on_message(src, msg)
                elif kind == _TIMER:
                    node.on_timer(payload)
                else:
                    payload()
            except BaseException as exc:  # surfaced to the thread calling run()
                if self._error is None:
                    self._error = exc
                    self._error_tb = traceback.format_exc()
                self._progress.set()
                return
            self._progress.set()

    def run(self, until: Callable[[], bool] | None = None, max_time: float | None = None, **_) -> Trace:
        deadline = None if max_time is None else time.perf_counter() + max_time
        while True:
            if self._error is not None:
                raise self._error
            if until is not None and until():
                return self.trace
            if deadline is not None and time.perf_counter() >= deadline:
                return self.trace
            self._progress.wait(0.002)
            self._progress.clear()

    def close(self) -> None:
        with self._lock:
            self._running = False
            self._cond.notify_all()
        for inbox in self._inboxes.values():
            inbox.put(None)
        for th in self._threads:
            th.join(timeout=2)
        self._threads.clear()
        if self._switch_interval is not None:
            sys.setswitchinterval(self._switch_interval)
            self._switch_interval = None


def make_network(mode: str, link: LinkModel, **kw) -> _NetworkBase:
    if mode == "virtual":
        return VirtualNetwork(link, **kw)
    if mode == "wall":
        kw.pop("costs", None)
        return WallNetwork(link, **kw)
    raise ValueError(f"unknown clock mode {mode!r}; expected 'virtual' or 'wall'")
