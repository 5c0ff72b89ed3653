"""Canonical binary encoding of every protocol message.

Frame: ``[tag: 1 B][sender: 4 B LE][body]``. Integers are fixed-width
little-endian, byte strings carry a 2-byte length prefix. A transaction
encodes to exactly ``40 + len(payload)`` bytes; containers that hold
transactions prefix each one with its 2-byte length.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .core import (
    MAX_PAYLOAD,
    TX_OVERHEAD,
    Block,
    Phase,
    QuorumCertificate,
    Transaction,
    Vote,
)
from .trusted import AccumulatorCert, NewViewReport


class DecodeError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class Tag(enum.IntEnum):
    REQUEST = 1
    REPLY = 2
    PROPOSAL = 3
    VOTE = 4
    CERT = 5
    NEW_VIEW = 6
    BLOCK_REQUEST = 7
    BLOCK_RESPONSE = 8
    BLOCK = 9
    QC = 10


# -- messages --------------------------------------------------------------------


@dataclass(frozen=True)
class Request:
    sender: int
    tx: Transaction
    signature: bytes


@dataclass(frozen=True)
class Reply:
    sender: int
    client_id: int
    tx_id: int
    result: bytes
    signature: bytes

    @property
    def replica_id(self) -> int:
        return self.sender


@dataclass(frozen=True)
class Proposal:
    sender: int
    view: int
    block: Block
    justify: QuorumCertificate | None
    cert: AccumulatorCert | None
    signature: bytes


@dataclass(frozen=True)
class VoteMsg:
    sender: int
    vote: Vote


@dataclass(frozen=True)
class CertMsg:
    """Leader broadcast opening ``phase`` with the certificate of the previous one."""

    sender: int
    phase: Phase
    qc: QuorumCertificate


@dataclass(frozen=True)
class NewView:
    sender: int
    view: int
    qc: QuorumCertificate | None
    report: NewViewReport | None
    signature: bytes


@dataclass(frozen=True)
class BlockRequest:
    sender: int
    block_hash: bytes


@dataclass(frozen=True)
class BlockResponse:
    sender: int
    block: Block


Message = Request | Reply | Proposal | VoteMsg | CertMsg | NewView | BlockRequest | BlockResponse


# -- low-level writers/readers ---------------------------------------------------------


def _bytes16(data: bytes) -> bytes:
    if len(data) > 0xFFFF:
        raise ValueError(f"byte string of {len(data)} B exceeds 2-byte length prefix")
    return struct.pack("<H", len(data)) + data


def encode_transaction(tx: Transaction) -> bytes:
    return tx.encode()


def _vote_body(v: Vote) -> bytes:
    return struct.pack("<QB", v.view, v.phase) + v.block_hash + struct.pack("<I", v.voter) + _bytes16(v.signature)


def _qc_body(qc: QuorumCertificate) -> bytes:
    parts = [struct.pack("<QB", qc.view, qc.phase), qc.block_hash, struct.pack("<H", len(qc.signers))]
    for signer, sig in zip(qc.signers, qc.signatures):
        parts.append(struct.pack("<I", signer))
        parts.append(_bytes16(sig))
    return b"".join(parts)


def _report_body(r: NewViewReport) -> bytes:
    return struct.pack("<QQ", r.target_view, r.prepared_view) + r.prepared_hash + struct.pack("<I", r.signer) + _bytes16(r.signature)


def _cert_body(c: AccumulatorCert) -> bytes:
    return (
        struct.pack("<Q", c.view)
        + c.chosen_block_hash
        + struct.pack("<QI", c.chosen_prepared_view, c.signer)
        + _bytes16(c.signature)
    )


def _optional(body: bytes | None) -> bytes:
    return b"\x00" if body is None else b"\x01" + body


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError(f"truncated input reading {what} ({n} B needed, {len(self.data) - self.pos} left)", self.pos)
        out = bytes(self.data[self.pos : self.pos + n])
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))

    def u8(self, what: str) -> int:
        return self.unpack("<B", what)[0]

    def u16(self, what: str) -> int:
        return self.unpack("<H", what)[0]

    def u32(self, what: str) -> int:
        return self.unpack("<I", what)[0]

    def u64(self, what: str) -> int:
        return self.unpack("<Q", what)[0]

    def bytes16(self, what: str) -> bytes:
        return self.take(self.u16(what + " length"), what)

    def phase(self) -> Phase:
        at = self.pos
        raw = self.u8("phase")
        try:
            return Phase(raw)
        except ValueError:
            raise DecodeError(f"unknown phase {raw}", at) from None

    def flag(self, what: str) -> bool:
        at = self.pos
        raw = self.u8(what)
        if raw not in (0, 1):
            raise DecodeError(f"invalid {what} flag {raw}", at)
        return raw == 1

    def done(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError(f"{len(self.data) - self.pos} trailing bytes", self.pos)

    # compound readers

    def transaction(self, length: int) -> Transaction:
        at = self.pos
        if length < TX_OVERHEAD or length - TX_OVERHEAD > MAX_PAYLOAD:
            raise DecodeError(f"invalid transaction length {length}", at)
        client_id, tx_id = self.unpack("<II", "transaction ids")
        prev = self.take(32, "prev_hash")
        payload = self.take(length - TX_OVERHEAD, "payload")
        return Transaction(client_id, tx_id, prev, payload)

    def block(self) -> Block:
        height, view = self.unpack("<QQ", "block header")
        parent = self.take(32, "parent_hash")
        count = self.u16("tx_count")
        txs = tuple(self.transaction(self.u16("tx length")) for _ in range(count))
        return Block(height, view, parent, txs)

    def vote(self) -> Vote:
        view = self.u64("view")
        phase = self.phase()
        block_hash = self.take(32, "block_hash")
        voter = self.u32("voter")
        return Vote(view, phase, block_hash, voter, self.bytes16("signature"))

    def qc(self) -> QuorumCertificate:
        view = self.u64("view")
        phase = self.phase()
        block_hash = self.take(32, "block_hash")
        count = self.u16("signer count")
        signers, sigs = [], []
        for _ in range(count):
            signers.append(self.u32("signer"))
            sigs.append(self.bytes16("signature"))
        return QuorumCertificate(view, phase, block_hash, tuple(signers), tuple(sigs))

    def report(self) -> NewViewReport:
        target, pview = self.unpack("<QQ", "report views")
        phash = self.take(32, "prepared_hash")
        signer = self.u32("signer")
        return NewViewReport(target, pview, phash, signer, self.bytes16("signature"))

    def cert(self) -> AccumulatorCert:
        view = self.u64("view")
        chosen = self.take(32, "chosen_block_hash")
        pview, signer = self.unpack("<QI", "cert fields")
        return AccumulatorCert(view, chosen, pview, signer, self.bytes16("signature"))


# -- public API ------------------------------------------------------------------------------


def encode(msg) -> bytes:
    """Canonical bytes for a message, a standalone block or a standalone QC."""
    if isinstance(msg, Request):
        body = _bytes16(msg.tx.encode()) + _bytes16(msg.signature)
        return _frame(Tag.REQUEST, msg.sender, body)
    if isinstance(msg, Reply):
        body = struct.pack("<II", msg.client_id, msg.tx_id) + _bytes16(msg.result) + _bytes16(msg.signature)
        return _frame(Tag.REPLY, msg.sender, body)
    if isinstance(msg, Proposal):
        body = (
            struct.pack("<Q", msg.view)
            + msg.block.encode()
            + _optional(None if msg.justify is None else _qc_body(msg.justify))
            + _optional(None if msg.cert is None else _cert_body(msg.cert))
            + _bytes16(msg.signature)
        )
        return _frame(Tag.PROPOSAL, msg.sender, body)
    if isinstance(msg, VoteMsg):
        return _frame(Tag.VOTE, msg.sender, _vote_body(msg.vote))
    if isinstance(msg, CertMsg):
        return _frame(Tag.CERT, msg.sender, struct.pack("<B", msg.phase) + _qc_body(msg.qc))
    if isinstance(msg, NewView):
        body = (
            struct.pack("<Q", msg.view)
            + _optional(None if msg.qc is None else _qc_body(msg.qc))
            + _optional(None if msg.report is None else _report_body(msg.report))
            + _bytes16(msg.signature)
        )
        return _frame(Tag.NEW_VIEW, msg.sender, body)
    if isinstance(msg, BlockRequest):
        return _frame(Tag.BLOCK_REQUEST, msg.sender, msg.block_hash)
    if isinstance(msg, BlockResponse):
        return _frame(Tag.BLOCK_RESPONSE, msg.sender, msg.block.encode())
    if isinstance(msg, Block):
        return _frame(Tag.BLOCK, 0, msg.encode())
    if isinstance(msg, QuorumCertificate):
        return _frame(Tag.QC, 0, _qc_body(msg))
    raise TypeError(f"cannot encode {type(msg).__name__}")


def _frame(tag: Tag, sender: int, body: bytes) -> bytes:
    return struct.pack("<BI", tag, sender) + body


def decode(data: bytes):
    r = _Reader(data)
    if not data:
        raise DecodeError("empty input", 0)
    raw_tag = r.u8("tag")
    try:
        tag = Tag(raw_tag)
    except ValueError:
        raise DecodeError(f"unknown message tag {raw_tag}", 0) from None
    sender = r.u32("sender")
    if tag is Tag.REQUEST:
        tx = r.transaction(r.u16("tx length"))
        msg = Request(sender, tx, r.bytes16("signature"))
    elif tag is Tag.REPLY:
        client_id, tx_id = r.unpack("<II", "reply ids")
        result = r.bytes16("result")
        msg = Reply(sender, client_id, tx_id, result, r.bytes16("signature"))
    elif tag is Tag.PROPOSAL:
        view = r.u64("view")
        block = r.block()
        justify = r.qc() if r.flag("justify") else None
        cert = r.cert() if r.flag("cert") else None
        msg = Proposal(sender, view, block, justify, cert, r.bytes16("signature"))
    elif tag is Tag.VOTE:
        msg = VoteMsg(sender, r.vote())
    elif tag is Tag.CERT:
        phase = r.phase()
        msg = CertMsg(sender, phase, r.qc())
    elif tag is Tag.NEW_VIEW:
        view = r.u64("view")
        qc = r.qc() if r.flag("qc") else None
        report = r.report() if r.flag("report") else None
        msg = NewView(sender, view, qc, report, r.bytes16("signature"))
    elif tag is Tag.BLOCK_REQUEST:
        msg = BlockRequest(sender, r.take(32, "block_hash"))
    elif tag is Tag.BLOCK_RESPONSE:
        msg = BlockResponse(sender, r.block())
    elif tag is Tag.BLOCK:
        msg = r.block()
    else:
        msg = r.qc()
    r.done()
    return msg


def decode_transaction(data: bytes) -> Transaction:
    r = _Reader(data)
    tx = r.transaction(len(data))
    r.done()
    return tx


def describe(msg) -> tuple[str, int, str, bytes]:
    """(kind, view, phase name, block hash) used for trace lines; blanks where absent."""
    if isinstance(msg, Proposal):
        return "proposal", msg.view, Phase.PREPARE.name, msg.block.hash
    if isinstance(msg, VoteMsg):
        v = msg.vote
        return "vote", v.view, v.phase.name, v.block_hash
    if isinstance(msg, CertMsg):
        return "cert", msg.qc.view, msg.phase.name, msg.qc.block_hash
    if isinstance(msg, NewView):
        return "newview", msg.view, Phase.NEW_VIEW.name, b""
    if isinstance(msg, Request):
        return "request", 0, "", b""
    if isinstance(msg, Reply):
        return "reply", 0, "", b""
    if isinstance(msg, BlockRequest):
        return "blockreq", 0, "", msg.block_hash
    if isinstance(msg, BlockResponse):
        return "blockresp", msg.block.view, "", msg.block.hash
    return type(msg).__name__.lower(), 0, "", b""
