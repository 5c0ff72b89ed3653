import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irsbft import crypto, wire
from irsbft.core import GENESIS, GENESIS_QC, MAX_U32, MAX_U64, Block, Phase, QuorumCertificate, Transaction, Vote, vote_payload
from irsbft.trusted import AccumulatorCert, NewViewReport
from irsbft.wire import BlockRequest, BlockResponse, CertMsg, DecodeError, NewView, Proposal, Reply, Request, VoteMsg

u32 = st.integers(0, MAX_U32)
u64 = st.integers(0, MAX_U64)
h32 = st.binary(min_size=32, max_size=32)
sig = st.binary(max_size=80)
phases = st.sampled_from(list(Phase))

txs = st.builds(Transaction, u32, u32, h32, st.binary(max_size=200))
blocks = st.builds(Block, u64, u64, h32, st.lists(txs, max_size=4).map(tuple))
votes = st.builds(Vote, u64, phases, h32, u32, sig)


@st.composite
def qcs(draw):
    signers = draw(st.lists(u32, max_size=4))
    return QuorumCertificate(draw(u64), draw(phases), draw(h32), tuple(signers), tuple(draw(sig) for _ in signers))


reports = st.builds(NewViewReport, u64, u64, h32, u32, sig)
certs = st.builds(AccumulatorCert, u64, h32, u64, u32, sig)

messages = st.one_of(
    st.builds(Request, u32, txs, sig),
    st.builds(Reply, u32, u32, u32, st.binary(max_size=64), sig),
    st.builds(Proposal, u32, u64, blocks, st.none() | qcs(), st.none() | certs, sig),
    st.builds(VoteMsg, u32, votes),
    st.builds(CertMsg, u32, phases, qcs()),
    st.builds(NewView, u32, u64, st.none() | qcs(), st.none() | reports, sig),
    st.builds(BlockRequest, u32, h32),
    st.builds(BlockResponse, u32, blocks),
    blocks,
    qcs(),
)


@settings(max_examples=10_000, deadline=None)
@given(messages)
def test_round_trip_every_message_kind(msg):
    data = wire.encode(msg)
    assert wire.decode(data) == msg
    assert wire.encode(wire.decode(data)) == data


@settings(max_examples=500, deadline=None)
@given(messages, st.data())
def test_any_truncation_is_a_decode_error(msg, data):
    raw = wire.encode(msg)
    cut = data.draw(st.integers(0, len(raw) - 1))
    with pytest.raises(DecodeError):
        wire.decode(raw[:cut])


@settings(max_examples=500, deadline=None)
@given(messages, st.binary(min_size=1, max_size=8))
def test_trailing_bytes_rejected(msg, extra):
    with pytest.raises(DecodeError, match="trailing"):
        wire.decode(wire.encode(msg) + extra)


def test_genesis_block_canonical_bytes():
    data = wire.encode(GENESIS)
    assert data == bytes([wire.Tag.BLOCK]) + bytes(4) + bytes(16) + bytes(32) + bytes(2)
    assert wire.decode(data) == GENESIS
    assert wire.decode(wire.encode(GENESIS_QC)) == GENESIS_QC


def test_empty_input():
    with pytest.raises(DecodeError):
        wire.decode(b"")


def test_unknown_tag():
    with pytest.raises(DecodeError, match="tag"):
        wire.decode(b"\xee" + bytes(10))


def test_unknown_phase():
    data = bytearray(wire.encode(VoteMsg(1, Vote(3, Phase.PREPARE, bytes(32), 1, b""))))
    data[5 + 8] = 99
    with pytest.raises(DecodeError, match="phase"):
        wire.decode(bytes(data))


def test_decode_error_reports_offset():
    with pytest.raises(DecodeError) as info:
        wire.decode(wire.encode(BlockRequest(0, bytes(32)))[:20])
    assert info.value.offset == 5


@pytest.mark.parametrize("n,size", [(0, 40), (8, 48), (128, 168), (1024, 1064)])
def test_encoded_transaction_sizes(n, size):
    tx = Transaction(1, 2, payload=bytes(n))
    assert len(wire.encode_transaction(tx)) == size
    assert wire.decode_transaction(wire.encode_transaction(tx)) == tx


def test_flipped_vote_byte_never_yields_a_valid_vote():
    key = crypto.gen_keypair(crypto.derive_seed(0, "replica", 1))
    h = crypto.digest(b"block")
    vote = Vote(3, Phase.PREPARE, h, 1, crypto.sign(key, vote_payload(3, Phase.PREPARE, h)))
    raw = wire.encode(VoteMsg(1, vote))
    accepted = 0
    for i in range(len(raw)):
        for bit in range(8):
            bad = bytearray(raw)
            bad[i] ^= 1 << bit
            try:
                msg = wire.decode(bytes(bad))
            except DecodeError:
                continue
            if not isinstance(msg, VoteMsg):
                continue
            v = msg.vote
            if msg.sender == v.voter == 1 and crypto.verify(key.public_key, vote_payload(v.view, v.phase, v.block_hash), v.signature):
                accepted += 1
    assert accepted == 0


def test_describe_gives_trace_fields():
    b = Block(1, 4, GENESIS.hash)
    assert wire.describe(Proposal(0, 4, b, GENESIS_QC, None, b"")) == ("proposal", 4, "PREPARE", b.hash)
    assert wire.describe(BlockRequest(2, b.hash))[0] == "blockreq"


def test_cannot_encode_foreign_types():
    with pytest.raises(TypeError):
        wire.encode(object())
