"""Simulated HSM-resident trusted components for the hybrid protocol.

Each replica owns one :class:`TrustedComponent` holding a key the replica
itself cannot read. It provides two services:

* the *checker*, a monotonic per-phase view counter plus signing oracle, so
  a replica can never sign two different blocks for the same (view, phase);
* the *accumulator*, which turns f+1 checker-attested new-view reports into
  a certificate naming the most recently prepared block, which the leader
  is then forced to extend.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from . import crypto
from .core import (
    GENESIS,
    Block,
    Phase,
    Protocol,
    QuorumCertificate,
    Vote,
    quorum_size,
    verify_qc,
    vote_payload,
)


class TrustedComponentError(Exception):
    pass


class CheckerRefusal(TrustedComponentError):
    """The checker declined to sign: equivocation, replay or a stale view."""


class InvalidCertificate(TrustedComponentError):
    pass


class InsufficientQuorum(TrustedComponentError):
    pass


class InconsistentViews(TrustedComponentError):
    pass


@dataclass(frozen=True)
class NewViewReport:
    """Checker attestation of the highest prepared block, sent to a new leader."""

    target_view: int
    prepared_view: int
    prepared_hash: bytes
    signer: int
    signature: bytes


@dataclass(frozen=True)
class AccumulatorCert:
    view: int
    chosen_block_hash: bytes
    chosen_prepared_view: int
    signer: int
    signature: bytes


@dataclass
class CheckerState:
    owner: int
    last_signed_view: dict[Phase, int] = field(default_factory=dict)
    highest_prepared: tuple[int, bytes] | None = None
    horizon: int = 0


def report_payload(target_view: int, prepared_view: int, prepared_hash: bytes) -> bytes:
    return b"N" + struct.pack("<QQ", target_view, prepared_view) + prepared_hash


def cert_payload(view: int, block_hash: bytes, prepared_view: int) -> bytes:
    return b"A" + struct.pack("<Q", view) + block_hash + struct.pack("<Q", prepared_view)


def verify_report(report: NewViewReport, checker_keys, meter: crypto.CostMeter | None = None) -> bool:
    if not 0 <= report.signer < len(checker_keys):
        return False
    check = meter.verify if meter is not None else crypto.verify
    payload = report_payload(report.target_view, report.prepared_view, report.prepared_hash)
    return check(checker_keys[report.signer], payload, report.signature)


def verify_cert(cert: AccumulatorCert, checker_keys, meter: crypto.CostMeter | None = None) -> bool:
    if not 0 <= cert.signer < len(checker_keys):
        return False
    check = meter.verify if meter is not None else crypto.verify
    payload = cert_payload(cert.view, cert.chosen_block_hash, cert.chosen_prepared_view)
    return check(checker_keys[cert.signer], payload, cert.signature)


def select_prepared(reports) -> tuple[int, bytes]:
    """Highest prepared view; ties go to the lexicographically smallest hash."""
    best = min(reports, key=lambda r: (-r.prepared_view, r.prepared_hash))
    return best.prepared_view, best.prepared_hash


class TrustedComponent:
    """Checker and accumulator for one replica.

    The signing key lives in a private attribute; replicas interact only
    through the methods below, mirroring the narrow HSM call boundary.
    """

    def __init__(self, owner: int, seed: bytes, checker_keys, f: int, meter: crypto.CostMeter | None = None):
        self.__key = crypto.gen_keypair(seed)
        self.__state = CheckerState(owner=owner)
        self.owner = owner
        self.checker_keys = tuple(checker_keys)
        self.f = f
        self.quorum = quorum_size(Protocol.HYBRID, f)
        self.meter = meter or crypto.CostMeter()

    @property
    def public_key(self) -> bytes:
        return self.__key.public_key

    @property
    def state(self) -> CheckerState:
        s = self.__state
        return CheckerState(s.owner, dict(s.last_signed_view), s.highest_prepared, s.horizon)

    def _admit(self, view: int, phase: Phase) -> None:
        s = self.__state
        if view < s.horizon:
            raise CheckerRefusal(f"view {view} is behind the checker's view {s.horizon}")
        last = s.last_signed_view.get(phase)
        if last is not None and view <= last:
            raise CheckerRefusal(f"already signed {phase.name} for view {last}; refusing view {view}")

    def _commit(self, view: int, phase: Phase) -> None:
        s = self.__state
        s.last_signed_view[phase] = view
        s.horizon = max(s.horizon, view)

    def checker_sign(self, view: int, phase: Phase, block_hash: bytes) -> Vote:
        """Sign (view, phase, block_hash) at most once per (view, phase).

        A commit vote additionally requires that this checker recorded the
        prepare certificate for the same block in the same view.
        """
        if phase is Phase.NEW_VIEW:
            raise CheckerRefusal("new-view attestations go through sign_new_view")
        self._admit(view, phase)
        if phase is Phase.COMMIT and self.__state.highest_prepared != (view, block_hash):
            raise CheckerRefusal("commit vote for a block this checker has not seen prepared")
        sig = self.meter.sign(self.__key, vote_payload(view, phase, block_hash), label=f"checker-{phase.name}")
        self._commit(view, phase)
        return Vote(view=view, phase=phase, block_hash=block_hash, voter=self.owner, signature=sig)

    def sign_proposal(self, block: Block, cert: AccumulatorCert) -> Vote:
        """Leader-side prepare signature, only for a block extending the certified one."""
        if cert.signer != self.owner or not verify_cert(cert, self.checker_keys, self.meter):
            raise InvalidCertificate("accumulator certificate not issued by this component")
        if cert.view != block.view or block.parent_hash != cert.chosen_block_hash:
            raise CheckerRefusal("proposal does not extend the certified block")
        self.meter.charge_hash(len(block.encode()))
        return self.checker_sign(block.view, Phase.PREPARE, block.hash)

    def checker_record_prepared(self, qc: QuorumCertificate) -> CheckerState:
        if qc.phase is not Phase.PREPARE or not verify_qc(qc, self.checker_keys, self.quorum, self.meter):
            raise InvalidCertificate(f"not a valid prepare certificate (view {qc.view})")
        s = self.__state
        if s.highest_prepared is None or qc.view > s.highest_prepared[0]:
            s.highest_prepared = (qc.view, qc.block_hash)
        return self.state

    def sign_new_view(self, target_view: int) -> NewViewReport:
        self._admit(target_view, Phase.NEW_VIEW)
        pview, phash = self.__state.highest_prepared or (0, GENESIS.hash)
        sig = self.meter.sign(self.__key, report_payload(target_view, pview, phash), label="checker-NEW_VIEW")
        self._commit(target_view, Phase.NEW_VIEW)
        return NewViewReport(target_view, pview, phash, self.owner, sig)

    def accumulate(self, reports) -> AccumulatorCert:
        """Certify the block with the highest prepared view among f+1 valid reports."""
        reports = list(reports)
        targets = {r.target_view for r in reports}
        if len(targets) > 1:
            raise InconsistentViews(f"reports target different views: {sorted(targets)}")
        valid: dict[int, NewViewReport] = {}
        for r in sorted(reports, key=lambda r: (r.signer, r.prepared_view, r.prepared_hash, r.signature)):
            if r.signer not in valid and verify_report(r, self.checker_keys, self.meter):
                valid[r.signer] = r
        if len(valid) < self.quorum:
            raise InsufficientQuorum(f"{len(valid)} valid new-view reports, need {self.quorum}")
        view = targets.pop()
        pview, phash = select_prepared(valid.values())
        sig = self.meter.sign(self.__key, cert_payload(view, phash, pview), label="accumulator")
        return AccumulatorCert(view, phash, pview, self.owner, sig)
