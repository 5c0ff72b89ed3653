"""Hybrid-fault replica: n >= 2f+1, quorum f+1, two vote rounds.

Every signature that matters for safety (prepare and commit votes, new-view
reports, the leader's proposal) comes from the replica's trusted component,
which refuses to sign two blocks for one (view, phase). That removes the
need for HotStuff's extra pre-commit round.
"""

from __future__ import annotations

from ..core import Phase, Protocol, QuorumCertificate, Vote, verify_qc, vote_payload
from ..trusted import AccumulatorCert, TrustedComponent, TrustedComponentError, verify_cert, verify_report
from ..wire import CertMsg, NewView, Proposal, VoteMsg
from .replica import Replica


class HybridReplica(Replica):
    protocol = Protocol.HYBRID

    def __init__(self, replica_id, config, key, trusted: TrustedComponent, **kw):
        super().__init__(replica_id, config, key, **kw)
        if trusted.owner != replica_id:
            raise ValueError("trusted component belongs to another replica")
        self.trusted = trusted
        self.certs: dict[int, AccumulatorCert] = {}

    def attach(self, net, meter) -> None:
        super().attach(net, meter)
        self.trusted.meter = meter

    def _valid_qc(self, qc: QuorumCertificate) -> bool:
        return verify_qc(qc, self.config.checker_keys, self.config.quorum, self.meter)

    def _checker_vote(self, view: int, phase: Phase, block_hash: bytes) -> Vote | None:
        try:
            vote = self.trusted.checker_sign(view, phase, block_hash)
        except TrustedComponentError as exc:
            self._note(f"checker refused {phase.name} vote for view {view}: {exc}")
            return None
        self.voted.add((view, phase))
        self.current_phase = phase
        self._to_leader(view, VoteMsg(self.id, vote))
        return vote

    # -- new view --------------------------------------------------------------------------

    def _send_new_view(self, view: int) -> None:
        try:
            report = self.trusted.sign_new_view(view)
        except TrustedComponentError as exc:
            self._note(f"checker refused new-view report for view {view}: {exc}")
            return
        self._to_leader(view, NewView(self.id, view, None, report, b""))

    def on_new_view(self, src: int, msg: NewView) -> None:
        view, report = msg.view, msg.report
        if self.config.leader(view) != self.id or view < self.current_view or report is None:
            return
        if report.signer != msg.sender or report.target_view != view:
            self._note(f"dropped new-view from {msg.sender}: report does not match")
            return
        bucket = self.new_views.setdefault(view, {})
        if msg.sender in bucket:
            return
        if msg.sender != self.id and not verify_report(report, self.config.checker_keys, self.meter):
            self._note(f"dropped new-view from {msg.sender}: bad checker signature")
            return
        bucket[msg.sender] = msg
        if len(bucket) >= self.config.quorum and view > self.current_view:
            self._jump_to(view)
        self._try_propose()

    # -- proposing -------------------------------------------------------------------------------

    def _try_propose(self) -> Proposal | None:
        view = self.current_view
        if self.config.leader(view) != self.id or view in self.proposed or self.crashed:
            return None
        bucket = self.new_views.get(view, {})
        if len(bucket) < self.config.quorum:
            return None
        cert = self.certs.get(view)
        if cert is None:
            try:
                # reports already checked on arrival: hand the accumulator exactly a quorum
                chosen = [bucket[s].report for s in sorted(bucket)][: self.config.quorum]
                cert = self.trusted.accumulate(chosen)
            except TrustedComponentError as exc:
                self._note(f"accumulator refused: {exc}")
                return None
            self.certs[view] = cert
        parent = self.blocks.get(cert.chosen_block_hash)
        if parent is None:
            self._need_block(cert.chosen_block_hash, self._try_propose)
            return None
        block = self._build_block(parent, view)
        if block is None:
            return None
        try:
            own = self.trusted.sign_proposal(block, cert)
        except TrustedComponentError as exc:
            self._note(f"checker refused proposal: {exc}")
            return None
        self.proposed[view] = [block]
        self._store(block)
        self.voted.add((view, Phase.PREPARE))
        self.current_phase = Phase.PREPARE
        proposal = Proposal(self.id, view, block, None, cert, own.signature)
        if self.equivocating:
            other = self._variant(block)
            try:
                sig = self.trusted.sign_proposal(other, cert).signature
            except TrustedComponentError as exc:
                # the checker will not sign a second block; send it anyway with a reused signature
                self._note(f"checker refused equivocating proposal: {exc}")
                sig = own.signature
            self.proposed[view].append(other)
            self._split_send(proposal, Proposal(self.id, view, other, None, cert, sig))
        else:
            for r in self.others:
                self._send(r, proposal)
        self._add_vote(own)
        return proposal

    # -- replica side -------------------------------------------------------------------------------

    def on_proposal(self, src: int, msg: Proposal) -> Vote | None:
        view, block, cert = msg.view, msg.block, msg.cert
        leader = self.config.leader(view)
        if msg.sender != leader or view < self.current_view or src == self.id:
            return None
        if cert is None or block.view != view or cert.view != view or cert.signer != leader:
            self._note(f"rejected proposal for view {view}: malformed")
            return None
        if block.parent_hash != cert.chosen_block_hash:
            self._note(f"rejected proposal for view {view}: does not extend the certified block")
            return None
        self.meter.charge_hash(len(block.encode()))
        keys = self.config.checker_keys
        if not self.meter.verify(keys[leader], vote_payload(view, Phase.PREPARE, block.hash), msg.signature):
            self._note(f"rejected proposal for view {view}: not signed by the leader's checker")
            return None
        if not verify_cert(cert, keys, self.meter):
            self._note(f"rejected proposal for view {view}: invalid accumulator certificate")
            return None
        parent = self.blocks.get(block.parent_hash)
        if parent is None:
            self._need_block(block.parent_hash, lambda: self.on_proposal(src, msg))
            return None
        if block.height != parent.height + 1:
            self._note(f"rejected proposal for view {view}: wrong height")
            return None
        self._jump_to(view)
        if not self._may_vote(view, Phase.PREPARE):
            return None
        self._store(block)
        return self._checker_vote(view, Phase.PREPARE, block.hash)

    def on_cert(self, src: int, msg: CertMsg) -> Vote | None:
        qc, phase = msg.qc, msg.phase
        expected = {Phase.COMMIT: Phase.PREPARE, Phase.DECIDE: Phase.COMMIT}.get(phase)
        if expected is not qc.phase:
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
        try:
            # the checker verifies the certificate itself
            self.trusted.checker_record_prepared(qc)
        except TrustedComponentError as exc:
            self._note(f"checker rejected prepare certificate: {exc}")
            return None
        self._jump_to(qc.view)
        self._adopt_prepared(qc)
        if not self._may_vote(qc.view, Phase.COMMIT):
            return None
        return self._checker_vote(qc.view, Phase.COMMIT, qc.block_hash)
