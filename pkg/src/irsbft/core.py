"""Domain types and the protocol arithmetic shared by every other module."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from functools import cached_property

from . import crypto

MAX_PAYLOAD = 2**16 - 1
TX_OVERHEAD = 4 + 4 + crypto.DIGEST_SIZE  # client id, tx id, previous-block hash
ZERO_HASH = bytes(crypto.DIGEST_SIZE)
MAX_U32 = 2**32 - 1
MAX_U64 = 2**64 - 1


class ConfigError(ValueError):
    """Invalid cluster or experiment configuration."""


class SizeError(ValueError):
    pass


class Protocol(str, enum.Enum):
    HOTSTUFF = "hotstuff"
    HYBRID = "hybrid"

    @classmethod
    def parse(cls, value: "Protocol | str") -> "Protocol":
        if isinstance(value, Protocol):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown protocol {value!r}; expected one of {[p.value for p in cls]}") from None


class Phase(enum.IntEnum):
    NEW_VIEW = 0
    PREPARE = 1
    PRE_COMMIT = 2
    COMMIT = 3
    DECIDE = 4


PHASES = {
    Protocol.HOTSTUFF: (Phase.NEW_VIEW, Phase.PREPARE, Phase.PRE_COMMIT, Phase.COMMIT, Phase.DECIDE),
    Protocol.HYBRID: (Phase.NEW_VIEW, Phase.PREPARE, Phase.COMMIT, Phase.DECIDE),
}
VOTE_PHASES = {
    Protocol.HOTSTUFF: (Phase.PREPARE, Phase.PRE_COMMIT, Phase.COMMIT),
    Protocol.HYBRID: (Phase.PREPARE, Phase.COMMIT),
}


def next_phase(protocol: Protocol, phase: Phase) -> Phase:
    order = PHASES[protocol]
    return order[order.index(phase) + 1]


def tx_wire_size(payload_len: int) -> int:
    if payload_len < 0 or payload_len > MAX_PAYLOAD:
        raise SizeError(f"payload of {payload_len} B outside 0..{MAX_PAYLOAD}")
    return payload_len + TX_OVERHEAD


def quorum_size(protocol: Protocol | str, f: int) -> int:
    """Votes needed for a certificate: N - f with the minimal N for ``f``."""
    if f < 0:
        raise ConfigError("f must be non-negative")
    if Protocol.parse(protocol) is Protocol.HOTSTUFF:
        return 2 * f + 1
    return f + 1


def min_replicas(protocol: Protocol | str, f: int) -> int:
    return 3 * f + 1 if Protocol.parse(protocol) is Protocol.HOTSTUFF else 2 * f + 1


def leader_of(view: int, n_replicas: int) -> int:
    if n_replicas < 1:
        raise ConfigError("n_replicas must be >= 1")
    return view % n_replicas


# -- payload types ---------------------------------------------------------------


@dataclass(frozen=True)
class Transaction:
    client_id: int
    tx_id: int
    prev_hash: bytes = ZERO_HASH
    payload: bytes = b""

    def __post_init__(self):
        if len(self.payload) > MAX_PAYLOAD:
            raise SizeError(f"payload of {len(self.payload)} B exceeds {MAX_PAYLOAD}")
        if len(self.prev_hash) != crypto.DIGEST_SIZE:
            raise SizeError("prev_hash must be 32 bytes")

    @property
    def key(self) -> tuple[int, int]:
        return (self.client_id, self.tx_id)

    def encode(self) -> bytes:
        return struct.pack("<II", self.client_id, self.tx_id) + self.prev_hash + self.payload

    @property
    def wire_size(self) -> int:
        return tx_wire_size(len(self.payload))


@dataclass(frozen=True)
class Block:
    height: int
    view: int
    parent_hash: bytes
    transactions: tuple[Transaction, ...] = ()

    def encode(self) -> bytes:
        parts = [struct.pack("<QQ", self.height, self.view), self.parent_hash, struct.pack("<H", len(self.transactions))]
        for tx in self.transactions:
            body = tx.encode()
            parts.append(struct.pack("<H", len(body)))
            parts.append(body)
        return b"".join(parts)

    @cached_property
    def hash(self) -> bytes:
        return crypto.digest(self.encode())

    def extends(self, parent: "Block") -> bool:
        return self.parent_hash == parent.hash and self.height == parent.height + 1


GENESIS = Block(height=0, view=0, parent_hash=ZERO_HASH, transactions=())


@dataclass(frozen=True)
class Vote:
    view: int
    phase: Phase
    block_hash: bytes
    voter: int
    signature: bytes


@dataclass(frozen=True)
class QuorumCertificate:
    view: int
    phase: Phase
    block_hash: bytes
    signers: tuple[int, ...] = ()
    signatures: tuple[bytes, ...] = ()

    @property
    def is_genesis(self) -> bool:
        return self.view == 0 and self.block_hash == GENESIS.hash and not self.signers


GENESIS_QC = QuorumCertificate(view=0, phase=Phase.PREPARE, block_hash=GENESIS.hash)


def vote_payload(view: int, phase: Phase, block_hash: bytes) -> bytes:
    return b"V" + struct.pack("<QB", view, phase) + block_hash


def form_qc(votes) -> QuorumCertificate:
    """Aggregate matching votes into a certificate, signers in ascending id order."""
    votes = sorted(votes, key=lambda v: v.voter)
    first = votes[0]
    if any((v.view, v.phase, v.block_hash) != (first.view, first.phase, first.block_hash) for v in votes):
        raise ValueError("votes do not match")
    return QuorumCertificate(
        view=first.view,
        phase=first.phase,
        block_hash=first.block_hash,
        signers=tuple(v.voter for v in votes),
        signatures=tuple(v.signature for v in votes),
    )


def verify_qc(qc: QuorumCertificate, public_keys, quorum: int, meter: crypto.CostMeter | None = None) -> bool:
    """True iff ``qc`` carries ``quorum`` distinct valid signatures (genesis QC is axiomatic)."""
    if qc.is_genesis:
        return True
    signers = qc.signers
    if len(signers) < quorum or len(set(signers)) != len(signers) or len(signers) != len(qc.signatures):
        return False
    payload = vote_payload(qc.view, qc.phase, qc.block_hash)
    check = meter.verify if meter is not None else crypto.verify
    for signer, sig in zip(signers, qc.signatures):
        if not 0 <= signer < len(public_keys):
            return False
        if not check(public_keys[signer], payload, sig):
            return False
    return True


@dataclass(frozen=True)
class ClusterConfig:
    protocol: Protocol
    n_replicas: int
    f: int
    replica_keys: tuple[bytes, ...]
    checker_keys: tuple[bytes, ...] = ()
    client_keys: dict[int, bytes] = field(default_factory=dict)
    preset: str = "10BASE-T1"
    timeout_base: float = 0.100
    batch_size: int = 1
    signature_size: int = crypto.SIGNATURE_SIZE
    variants: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol.parse(self.protocol))
        if self.f < 0:
            raise ConfigError("f must be non-negative")
        need = min_replicas(self.protocol, self.f)
        if self.n_replicas < need:
            raise ConfigError(
                f"{self.protocol.value} with f={self.f} needs at least {need} replicas, got {self.n_replicas}"
            )
        if len(self.replica_keys) != self.n_replicas:
            raise ConfigError("one public key per replica required")
        if self.protocol is Protocol.HYBRID and len(self.checker_keys) != self.n_replicas:
            raise ConfigError("hybrid protocol needs one trusted-component key per replica")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.timeout_base <= 0:
            raise ConfigError("timeout_base must be positive")

    @property
    def quorum(self) -> int:
        return quorum_size(self.protocol, self.f)

    @property
    def vote_keys(self) -> tuple[bytes, ...]:
        """Keys under which votes and certificates are checked."""
        return self.checker_keys if self.protocol is Protocol.HYBRID else self.replica_keys

    def leader(self, view: int) -> int:
        return leader_of(view, self.n_replicas)


def request_payload(tx: Transaction) -> bytes:
    return b"Q" + tx.encode()


def reply_payload(client_id: int, tx_id: int, result: bytes) -> bytes:
    return b"R" + struct.pack("<II", client_id, tx_id) + result


def proposal_payload(view: int, block_hash: bytes) -> bytes:
    return b"P" + struct.pack("<Q", view) + block_hash


def new_view_payload(view: int, qc: QuorumCertificate) -> bytes:
    return b"W" + struct.pack("<QQB", view, qc.view, qc.phase) + qc.block_hash
