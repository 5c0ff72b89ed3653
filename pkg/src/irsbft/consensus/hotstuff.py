"""Basic (non-pipelined) HotStuff replica: n >= 3f+1, quorum 2f+1, three vote rounds."""

from __future__ import annotations

from ..core import (
    Phase,
    Protocol,
    QuorumCertificate,
    Vote,
    new_view_payload,
    proposal_payload,
    verify_qc,
    vote_payload,
)
from ..wire import CertMsg, NewView, Proposal, VoteMsg
from .replica import Replica

# the certificate each leader broadcast carries, keyed by the phase it opens
_CARRIED = {Phase.PRE_COMMIT: Phase.PREPARE, Phase.COMMIT: Phase.PRE_COMMIT, Phase.DECIDE: Phase.COMMIT}


class HotStuffReplica(Replica):
    protocol = Protocol.HOTSTUFF

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.locked_qc: QuorumCertificate | None = None

    # -- helpers -----------------------------------------------------------------------------

    def _valid_qc(self, qc: QuorumCertificate) -> bool:
        return verify_qc(qc, self.config.replica_keys, self.config.quorum, self.meter)

    def safe_node(self, block_parent: bytes, justify: QuorumCertificate) -> bool:
        """Vote only for proposals extending the lock, or justified by a newer certificate."""
        lock = self.locked_qc
        if lock is None:
            return True
        return justify.view > lock.view or block_parent == lock.block_hash or self._extends(block_parent, lock.block_hash)

    def _extends(self, tip: bytes, ancestor: bytes) -> bool:
        h = tip
        while h in self.blocks:
            if h == ancestor:
                return True
            block = self.blocks[h]
            if block.height == 0:
                return False
            h = block.parent_hash
        return False

    def _sign_vote(self, view: int, phase: Phase, block_hash: bytes) -> Vote:
        self.voted.add((view, phase))
        self.current_phase = phase
        sig = self.meter.sign(self.key, vote_payload(view, phase, block_hash), label=f"vote-{phase.name}")
        vote = Vote(view, phase, block_hash, self.id, sig)
        self._to_leader(view, VoteMsg(self.id, vote))
        return vote

    # -- new view -----------------------------------------------------------------------------

    def _send_new_view(self, view: int) -> None:
        qc = self.prepared_qc
        sig = self.meter.sign(self.key, new_view_payload(view, qc), label="new-view")
        self._to_leader(view, NewView(self.id, view, qc, None, sig))

    def on_new_view(self, src: int, msg: NewView) -> None:
        view = msg.view
        if self.config.leader(view) != self.id or view < self.current_view or msg.qc is None:
            return
        bucket = self.new_views.setdefault(view, {})
        if msg.sender in bucket:
            return
        if msg.sender != self.id:
            pk = self.config.replica_keys[msg.sender]
            if not self.meter.verify(pk, new_view_payload(view, msg.qc), msg.signature):
                self._note(f"dropped new-view from {msg.sender}: bad signature")
                return
            if not self._valid_qc(msg.qc):
                self._note(f"dropped new-view from {msg.sender}: invalid certificate")
                return
        bucket[msg.sender] = msg
        self._adopt_prepared(msg.qc)
        if len(bucket) >= self.config.n_replicas - self.config.f and view > self.current_view:
            self._jump_to(view)
        self._try_propose()

    # -- proposing ---------------------------------------------------------------------------

    def high_qc(self, view: int) -> QuorumCertificate | None:
        bucket = self.new_views.get(view, {})
        if len(bucket) < self.config.n_replicas - self.config.f:
            return None
        return min((m.qc for m in bucket.values()), key=lambda qc: (-qc.view, qc.block_hash))

    def _try_propose(self) -> Proposal | None:
        view = self.current_view
        if self.config.leader(view) != self.id or view in self.proposed or self.crashed:
            return None
        high = self.high_qc(view)
        if high is None:
            return None
        parent = self.blocks.get(high.block_hash)
        if parent is None:
            self._need_block(high.block_hash, self._try_propose)
            return None
        block = self._build_block(parent, view)
        if block is None:
            return None
        proposal = self._make_proposal(block, high)
        self.proposed[view] = [block]
        if self.equivocating:
            other = self._variant(block)
            self.proposed[view].append(other)
            second = self._make_proposal(other, high)
            self._split_send(proposal, second)
            self._handle(self.id, proposal)
            self._handle(self.id, second)
        else:
            self._broadcast(proposal)
        return proposal

    def _make_proposal(self, block, justify: QuorumCertificate) -> Proposal:
        sig = self.meter.sign(self.key, proposal_payload(block.view, block.hash), label="proposal")
        return Proposal(self.id, block.view, block, justify, None, sig)

    # -- replica side ----------------------------------------------------------------------------

    def on_proposal(self, src: int, msg: Proposal) -> Vote | None:
        view, block, justify = msg.view, msg.block, msg.justify
        leader = self.config.leader(view)
        if msg.sender != leader or view < self.current_view:
            return None
        if src != self.id:
            if not self.meter.verify(self.config.replica_keys[leader], proposal_payload(view, block.hash), msg.signature):
                self._note(f"rejected proposal for view {view}: bad leader signature")
                return None
            self.meter.charge_hash(len(block.encode()))
        if justify is None or justify.phase not in (Phase.PREPARE, Phase.PRE_COMMIT) or block.view != view:
            self._note(f"rejected proposal for view {view}: malformed")
            return None
        if block.parent_hash != justify.block_hash:
            self._note(f"rejected proposal for view {view}: does not extend its justification")
            return None
        if src != self.id and not self._valid_qc(justify):
            self._note(f"rejected proposal for view {view}: invalid justification")
            return None
        parent = self.blocks.get(block.parent_hash)
        if parent is None:
            self._need_block(block.parent_hash, lambda: self.on_proposal(src, msg))
            return None
        if block.height != parent.height + 1:
            self._note(f"rejected proposal for view {view}: wrong height")
            return None
        if not self.safe_node(block.parent_hash, justify):
            self._note(f"rejected proposal for view {view}: conflicts with locked block")
            return None
        self._jump_to(view)
        self._adopt_prepared(justify)
        if not self._may_vote(view, Phase.PREPARE):
            return None
        self._store(block)
        self.current_phase = Phase.PREPARE
        return self._sign_vote(view, Phase.PREPARE, block.hash)

    def on_cert(self, src: int, msg: CertMsg) -> Vote | None:
        qc, phase = msg.qc, msg.phase
        if _CARRIED.get(phase) is not qc.phase:
            self._note(f"dropped {phase.name} message carrying a {qc.phase.name} certificate")
            return None
        if phase is Phase.DECIDE:
            if qc.block_hash in self.committed and qc.view < self.current_view:
                return None
            if src != self.id and not self._valid_qc(qc):
                self._note(f"dropped decide for view {qc.view}: invalid certificate")
                return None
            self._decide(qc)
            return None
        if qc.view < self.current_view:
            return None
        if src != self.id and not self._valid_qc(qc):
            self._note(f"dropped {phase.name} for view {qc.view}: invalid certificate")
            return None
        self._jump_to(qc.view)
        if phase is Phase.PRE_COMMIT:
            self._adopt_prepared(qc)
        else:
            if self.locked_qc is None or qc.view > self.locked_qc.view:
                self.locked_qc = qc
            self._adopt_prepared(qc)
        if not self._may_vote(qc.view, phase):
            return None
        return self._sign_vote(qc.view, phase, qc.block_hash)
