"""State and behaviour shared by the HotStuff and hybrid replicas.

A replica is an event-driven node: the network calls ``on_message`` and
``on_timer`` and the replica reacts by sending messages. The base class owns
the mempool, the block store, block fetching, in-order execution, client
replies, the pacemaker and fault injection; subclasses supply the voting
rules of their protocol.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .. import crypto
from ..core import (
    GENESIS,
    GENESIS_QC,
    MAX_U32,
    Block,
    ClusterConfig,
    Phase,
    QuorumCertificate,
    Transaction,
    Vote,
    form_qc,
    next_phase,
    reply_payload,
    request_payload,
    vote_payload,
)
from ..irs.apps import AppRegistry
from ..netsim.runtime import CLIENT_ADDRESS_BASE, client_address, is_client_address
from ..wire import BlockRequest, BlockResponse, CertMsg, NewView, Proposal, Reply, Request, VoteMsg
from .faults import CORRECT, FaultMode, FaultProfile

# Byzantine leaders pad equivocating blocks with a transaction from this id.
PHANTOM_CLIENT = MAX_U32

VIEW_TIMER = "view"


class DivergenceError(RuntimeError):
    """Safety alarm: committed state can no longer be reconciled."""


class NotLeader(RuntimeError):
    pass


class NotReady(RuntimeError):
    """The leader lacks the justification (or the parent block) to propose."""


@dataclass(frozen=True)
class CommitRecord:
    height: int
    view: int
    block_hash: bytes
    n_transactions: int
    snapshot: bytes


class Replica:
    """Protocol-agnostic replica core; see :class:`HotStuffReplica` and :class:`HybridReplica`."""

    protocol = None

    def __init__(
        self,
        replica_id: int,
        config: ClusterConfig,
        key: crypto.KeyPair,
        *,
        apps: AppRegistry | None = None,
        fault: FaultProfile = CORRECT,
    ):
        if not 0 <= replica_id < config.n_replicas:
            raise ValueError(f"replica id {replica_id} outside 0..{config.n_replicas - 1}")
        self.id = replica_id
        self.address = replica_id
        self.config = config
        self.key = key
        self.apps = apps if apps is not None else AppRegistry()
        self.fault = fault
        self.net = None
        self.meter = crypto.CostMeter()

        self.current_view = 0
        self.current_phase = Phase.NEW_VIEW
        self.prepared_qc: QuorumCertificate = GENESIS_QC

        self.mempool: dict[tuple[int, int], Transaction] = {}
        self.blocks: dict[bytes, Block] = {GENESIS.hash: GENESIS}
        self.chain: list[Block] = [GENESIS]
        self.committed: set[bytes] = {GENESIS.hash}
        self.committed_keys: set[tuple[int, int]] = set()
        self.replies: dict[tuple[int, int], Reply] = {}
        self.commit_log: list[CommitRecord] = []
        self.executed: list[tuple[Transaction, bytes]] = []

        self.voted: set[tuple[int, Phase]] = set()
        self.vote_buffer: dict[tuple[int, Phase, bytes], dict[int, Vote]] = {}
        self.qc_formed: set[tuple[int, Phase]] = set()
        self.new_views: dict[int, dict[int, NewView]] = {}
        self.proposed: dict[int, list[Block]] = {}
        self.pending_fetch: dict[bytes, list] = {}

        self.failures = 0
        self._armed_view: int | None = None
        self.audit: list[str] = []

    # -- node plumbing ------------------------------------------------------------------

    def attach(self, net, meter: crypto.CostMeter) -> None:
        self.net = net
        self.meter = meter

    def start(self) -> None:
        self._enter_view(1)

    def describe(self) -> str:
        return (
            f"{type(self).__name__} id={self.id} view={self.current_view} phase={self.current_phase.name} "
            f"height={self.height} mempool={len(self.mempool)} fault={self.fault.mode.value}"
        )

    @property
    def height(self) -> int:
        return self.chain[-1].height

    @property
    def others(self) -> list[int]:
        return [r for r in range(self.config.n_replicas) if r != self.id]

    def set_fault(self, fault: FaultProfile) -> None:
        self.fault = fault

    def faulty(self, mode: FaultMode | None = None) -> bool:
        """Whether the fault profile is active now (optionally of a given mode)."""
        f = self.fault
        if f.mode is FaultMode.CORRECT or self.current_view < f.activation_view:
            return False
        return mode is None or f.mode is mode

    @property
    def crashed(self) -> bool:
        return self.faulty(FaultMode.CRASH)

    @property
    def equivocating(self) -> bool:
        return self.faulty(FaultMode.EQUIVOCATE)

    def _note(self, text: str) -> None:
        self.audit.append(f"view {self.current_view}: {text}")

    # -- sending ---------------------------------------------------------------------------

    def _send(self, dst: int, msg) -> None:
        if dst == self.id:
            self._handle(self.id, msg)
            return
        if self.faulty(FaultMode.SILENT) or self.crashed:
            return
        if self.net is None or dst not in self.net.nodes:
            return
        defer = int(round(self.fault.delay * 1e9)) if self.faulty(FaultMode.DELAY) else 0
        self.net.send(self.id, dst, msg, defer_ns=defer)

    def _broadcast(self, msg, include_self: bool = True) -> None:
        """Send to every other replica first, then handle locally."""
        for r in self.others:
            self._send(r, msg)
        if include_self:
            self._handle(self.id, msg)

    def _to_leader(self, view: int, msg) -> None:
        self._send(self.config.leader(view), msg)

    # -- receiving ---------------------------------------------------------------------------

    def on_message(self, src: int, msg) -> None:
        if self.crashed:
            return
        sender = getattr(msg, "sender", None)
        expected = src - CLIENT_ADDRESS_BASE if is_client_address(src) else src
        if sender != expected:
            self._note(f"dropped {type(msg).__name__}: claimed sender {sender} != channel {src}")
            return
        self._handle(src, msg)

    def _handle(self, src: int, msg) -> None:
        if isinstance(msg, Request):
            self.on_request(src, msg)
        elif isinstance(msg, Proposal):
            self.on_proposal(src, msg)
        elif isinstance(msg, VoteMsg):
            self.on_vote(src, msg)
        elif isinstance(msg, CertMsg):
            self.on_cert(src, msg)
        elif isinstance(msg, NewView):
            self.on_new_view(src, msg)
        elif isinstance(msg, BlockRequest):
            self.on_block_request(src, msg)
        elif isinstance(msg, BlockResponse):
            self.on_block_response(src, msg)
        else:
            self._note(f"ignored unexpected {type(msg).__name__}")

    def on_timer(self, key) -> None:
        if self.crashed:
            return
        if isinstance(key, tuple) and key[0] == VIEW_TIMER:
            view = key[1]
            self._armed_view = None
            if view == self.current_view:
                self.failures += 1
                self._note(f"view timed out after {self.failures} consecutive failure(s)")
                self._enter_view(view + 1)

    # -- client requests and replies --------------------------------------------------------

    def on_request(self, src: int, msg: Request) -> None:
        tx = msg.tx
        if msg.sender != tx.client_id:
            self._note(f"request for client {tx.client_id} arrived from another address")
            return
        if tx.key in self.committed_keys:
            cached = self.replies.get(tx.key)
            if cached is not None:
                self._send(client_address(tx.client_id), cached)
            return
        if tx.key in self.mempool:
            return
        pk = self.config.client_keys.get(tx.client_id)
        if pk is None or not self.meter.verify(pk, request_payload(tx), msg.signature):
            self._note(f"rejected request {tx.key}: bad client signature")
            return
        self.mempool[tx.key] = tx
        self._arm_timer()
        if self.config.leader(self.current_view) == self.id:
            self._try_propose()

    def _reply(self, tx: Transaction, result: bytes) -> None:
        if tx.client_id == PHANTOM_CLIENT:
            return
        if self.equivocating:
            result = bytes(b ^ 0x5A for b in result) + b"?"
        sig = self.meter.sign(self.key, reply_payload(tx.client_id, tx.tx_id, result), label="reply")
        reply = Reply(self.id, tx.client_id, tx.tx_id, result, sig)
        self.replies[tx.key] = reply
        self._send(client_address(tx.client_id), reply)

    # -- block store and fetching ---------------------------------------------------------------

    def _store(self, block: Block) -> None:
        self.blocks.setdefault(block.hash, block)

    def _need_block(self, block_hash: bytes, retry) -> None:
        waiting = self.pending_fetch.get(block_hash)
        if waiting is None:
            self.pending_fetch[block_hash] = [retry]
            self._broadcast(BlockRequest(self.id, block_hash), include_self=False)
        else:
            waiting.append(retry)

    def on_block_request(self, src: int, msg: BlockRequest) -> None:
        block = self.blocks.get(msg.block_hash)
        if block is not None and not is_client_address(src):
            self._send(src, BlockResponse(self.id, block))

    def on_block_response(self, src: int, msg: BlockResponse) -> None:
        block = msg.block
        self.meter.charge_hash(len(block.encode()))
        waiting = self.pending_fetch.pop(block.hash, None)
        if waiting is None:
            return
        self._store(block)
        for retry in waiting:
            retry()

    def _uncommitted_branch(self, tip_hash: bytes) -> list[Block]:
        """Blocks from ``tip_hash`` back to (excluding) the committed chain, newest first."""
        out = []
        h = tip_hash
        while h not in self.committed:
            block = self.blocks.get(h)
            if block is None:
                break
            out.append(block)
            h = block.parent_hash
        return out

    # -- commit and execution -----------------------------------------------------------------

    def commit(self, block_hash: bytes) -> list[bytes]:
        """Commit ``block_hash`` and every uncommitted ancestor, then execute them in order.

        Returns the results of the transactions executed. Missing ancestors
        are fetched first; the commit completes once they arrive.
        """
        if block_hash in self.committed:
            return []
        path = []
        h = block_hash
        while h not in self.committed:
            block = self.blocks.get(h)
            if block is None:
                self._need_block(h, lambda: self.commit(block_hash))
                return []
            if block.height <= self.height:
                raise DivergenceError(
                    f"replica {self.id}: block {block.hash.hex()[:8]} at height {block.height} "
                    f"conflicts with committed chain at height {self.height}"
                )
            path.append(block)
            h = block.parent_hash
        results = []
        for block in reversed(path):
            results.extend(self._execute(block))
        return results

    def _execute(self, block: Block) -> list[bytes]:
        tip = self.chain[-1]
        if not block.extends(tip):
            raise DivergenceError(
                f"replica {self.id}: block at height {block.height} does not extend committed tip {tip.height}"
            )
        self.chain.append(block)
        self.committed.add(block.hash)
        results = []
        for tx in block.transactions:
            if tx.key in self.committed_keys:
                # duplicate inclusion across branches: executed once only
                continue
            result = self.apps.execute(tx.payload)
            self.committed_keys.add(tx.key)
            self.mempool.pop(tx.key, None)
            self.executed.append((tx, result))
            results.append(result)
            self._reply(tx, result)
        self.commit_log.append(CommitRecord(block.height, block.view, block.hash, len(block.transactions), self.apps.snapshot()))
        if self.net is not None:
            self.net.record(self.id, "commit", block.view, Phase.DECIDE.name, block.hash, len(block.encode()))
        return results

    def _decide(self, qc: QuorumCertificate) -> None:
        self.commit(qc.block_hash)
        self.failures = 0
        if qc.view >= self.current_view:
            self._enter_view(qc.view + 1)
        else:
            self._rearm()

    # -- pacemaker ------------------------------------------------------------------------------

    @property
    def timeout_ns(self) -> int:
        return int(round(self.config.timeout_base * 1e9)) << min(self.failures, 30)

    def _arm_timer(self) -> None:
        if self.net is None or not self.mempool or self._armed_view == self.current_view:
            return
        self._disarm()
        self._armed_view = self.current_view
        self.net.set_timer(self.address, (VIEW_TIMER, self.current_view), self.timeout_ns)

    def _disarm(self) -> None:
        if self._armed_view is not None and self.net is not None:
            self.net.cancel_timer(self.address, (VIEW_TIMER, self._armed_view))
        self._armed_view = None

    def _rearm(self) -> None:
        self._disarm()
        self._arm_timer()

    def _enter_view(self, view: int) -> None:
        """Move to ``view`` because the previous one ended (commit or timeout)."""
        if view <= self.current_view:
            return
        self.current_view = view
        self.current_phase = Phase.NEW_VIEW
        self._prune(view)
        self._rearm()
        self._send_new_view(view)
        if self.config.leader(view) == self.id:
            self._try_propose()

    def _jump_to(self, view: int) -> None:
        """Catch up with a view that other replicas already entered."""
        if view <= self.current_view:
            return
        self.current_view = view
        self.current_phase = Phase.NEW_VIEW
        self._prune(view)
        self._rearm()

    def _prune(self, view: int) -> None:
        horizon = view - 2
        for table in (self.new_views, self.proposed):
            for v in [v for v in table if v < horizon]:
                del table[v]
        self.voted = {k for k in self.voted if k[0] >= horizon}
        self.qc_formed = {k for k in self.qc_formed if k[0] >= horizon}
        self.vote_buffer = {k: b for k, b in self.vote_buffer.items() if k[0] >= horizon}

    # -- proposing ----------------------------------------------------------------------------

    def _select_batch(self, parent_hash: bytes) -> list[Transaction]:
        pending = {tx.key for b in self._uncommitted_branch(parent_hash) for tx in b.transactions}
        batch = []
        for key, tx in self.mempool.items():
            if key not in pending:
                batch.append(tx)
                if len(batch) == self.config.batch_size:
                    break
        return batch

    def _build_block(self, parent: Block, view: int) -> Block | None:
        batch = self._select_batch(parent.hash)
        if not batch and parent.hash in self.committed:
            return None  # nothing to order and nothing left to finish
        block = Block(parent.height + 1, view, parent.hash, tuple(batch))
        self.meter.charge_hash(len(block.encode()))
        return block

    def _variant(self, block: Block) -> Block:
        """A second, conflicting block for the same slot (equivocation)."""
        phantom = Transaction(PHANTOM_CLIENT, block.view & MAX_U32, payload=struct.pack("<Q", block.view))
        return Block(block.height, block.view, block.parent_hash, tuple(reversed(block.transactions)) + (phantom,))

    def _split_send(self, first, second) -> None:
        peers = self.others
        half = (len(peers) + 1) // 2
        for r in peers[:half]:
            self._send(r, first)
        for r in peers[half:]:
            self._send(r, second)

    def propose(self) -> Proposal:
        """Propose for the current view now, or raise NotLeader / NotReady."""
        if self.config.leader(self.current_view) != self.id:
            raise NotLeader(f"replica {self.id} does not lead view {self.current_view}")
        proposal = self._try_propose()
        if proposal is None:
            raise NotReady(f"replica {self.id} cannot propose in view {self.current_view} yet")
        return proposal

    def _try_propose(self) -> Proposal | None:
        raise NotImplementedError

    # -- votes and certificates -----------------------------------------------------------------

    def _may_vote(self, view: int, phase: Phase) -> bool:
        return self.equivocating or (view, phase) not in self.voted

    def on_vote(self, src: int, msg: VoteMsg) -> QuorumCertificate | None:
        vote = msg.vote
        if vote.voter != msg.sender:
            self._note("dropped vote: voter differs from sender")
            return None
        if self.config.leader(vote.view) != self.id:
            return None
        if (vote.view, vote.phase) in self.qc_formed:
            return None
        if not any(b.hash == vote.block_hash for b in self.proposed.get(vote.view, ())):
            return None
        buf = self.vote_buffer.setdefault((vote.view, vote.phase, vote.block_hash), {})
        if vote.voter in buf:
            return None
        if vote.voter != self.id and not self._verify_vote(vote):
            self._note(f"dropped vote from {vote.voter}: bad signature")
            return None
        return self._add_vote(vote)

    def _verify_vote(self, vote: Vote) -> bool:
        keys = self.config.vote_keys
        if not 0 <= vote.voter < len(keys):
            return False
        return self.meter.verify(keys[vote.voter], vote_payload(vote.view, vote.phase, vote.block_hash), vote.signature)

    def _add_vote(self, vote: Vote) -> QuorumCertificate | None:
        buf = self.vote_buffer.setdefault((vote.view, vote.phase, vote.block_hash), {})
        buf.setdefault(vote.voter, vote)
        if len(buf) < self.config.quorum or (vote.view, vote.phase) in self.qc_formed:
            return None
        self.qc_formed.add((vote.view, vote.phase))
        qc = form_qc(buf.values())
        self._broadcast(CertMsg(self.id, next_phase(self.config.protocol, qc.phase), qc))
        return qc

    def _adopt_prepared(self, qc: QuorumCertificate) -> None:
        if qc.view > self.prepared_qc.view:
            self.prepared_qc = qc

    # -- protocol hooks -------------------------------------------------------------------------------

    def _send_new_view(self, view: int) -> None:
        raise NotImplementedError

    def on_proposal(self, src: int, msg: Proposal):
        raise NotImplementedError

    def on_cert(self, src: int, msg: CertMsg):
        raise NotImplementedError

    def on_new_view(self, src: int, msg: NewView):
        raise NotImplementedError
