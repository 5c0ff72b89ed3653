import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irsbft import crypto
from irsbft.core import GENESIS, Block, Phase, QuorumCertificate, Vote, form_qc, vote_payload
from irsbft.trusted import (
    CheckerRefusal,
    InconsistentViews,
    InsufficientQuorum,
    InvalidCertificate,
    NewViewReport,
    TrustedComponent,
    report_payload,
    verify_cert,
)

F = 1
N = 3
SEEDS = [crypto.derive_seed(11, "checker", i) for i in range(N)]
KEYS = [crypto.gen_keypair(s) for s in SEEDS]
PKS = tuple(k.public_key for k in KEYS)


def component(i=0):
    return TrustedComponent(i, SEEDS[i], PKS, F)


def h(tag):
    return crypto.digest(str(tag).encode())


def prepare_qc(view, block_hash, signers=(0, 1)):
    votes = [Vote(view, Phase.PREPARE, block_hash, i, crypto.sign(KEYS[i], vote_payload(view, Phase.PREPARE, block_hash))) for i in signers]
    return form_qc(votes)


def test_checker_sign_examples():
    tc = component()
    vote = tc.checker_sign(1, Phase.PREPARE, h("a"))
    assert crypto.verify(PKS[0], vote_payload(1, Phase.PREPARE, h("a")), vote.signature)
    with pytest.raises(CheckerRefusal):
        tc.checker_sign(1, Phase.PREPARE, h("b"))
    assert tc.checker_sign(2, Phase.PREPARE, h("b")).view == 2


def test_same_block_twice_is_also_refused():
    tc = component()
    tc.checker_sign(4, Phase.PREPARE, h("a"))
    with pytest.raises(CheckerRefusal):
        tc.checker_sign(4, Phase.PREPARE, h("a"))


def test_lower_view_refused_after_higher():
    tc = component()
    tc.checker_sign(5, Phase.PREPARE, h("a"))
    with pytest.raises(CheckerRefusal):
        tc.checker_sign(3, Phase.PREPARE, h("b"))


def test_commit_requires_recorded_prepare_for_same_block():
    tc = component()
    with pytest.raises(CheckerRefusal):
        tc.checker_sign(2, Phase.COMMIT, h("x"))
    tc.checker_record_prepared(prepare_qc(2, h("x")))
    with pytest.raises(CheckerRefusal):
        tc.checker_sign(2, Phase.COMMIT, h("y"))
    assert tc.checker_sign(2, Phase.COMMIT, h("x")).phase is Phase.COMMIT


def test_record_prepared_is_monotone():
    tc = component()
    tc.checker_record_prepared(prepare_qc(5, h(5)))
    assert tc.checker_record_prepared(prepare_qc(3, h(3))).highest_prepared == (5, h(5))
    assert tc.checker_record_prepared(prepare_qc(6, h(6))).highest_prepared == (6, h(6))


def test_record_prepared_rejects_f_signatures():
    tc = component()
    tc.checker_record_prepared(prepare_qc(2, h(2)))
    before = tc.state
    with pytest.raises(InvalidCertificate):
        tc.checker_record_prepared(prepare_qc(4, h(4), signers=(1,)))
    with pytest.raises(InvalidCertificate):
        bogus = prepare_qc(4, h(4))
        tc.checker_record_prepared(QuorumCertificate(4, Phase.PREPARE, h(5), bogus.signers, bogus.signatures))
    assert tc.state == before


def report(signer, target, pview, phash):
    sig = crypto.sign(KEYS[signer], report_payload(target, pview, phash))
    return NewViewReport(target, pview, phash, signer, sig)


def test_accumulate_picks_highest_prepared():
    cert = component().accumulate([report(1, 8, 4, h(4)), report(2, 8, 7, h(7))])
    assert (cert.view, cert.chosen_prepared_view, cert.chosen_block_hash) == (8, 7, h(7))
    assert verify_cert(cert, PKS)


def test_accumulate_tie_breaks_on_smaller_hash():
    h1, h2 = sorted([h("p"), h("q")])
    cert = component().accumulate([report(1, 8, 7, h2), report(2, 8, 7, h1)])
    assert cert.chosen_block_hash == h1


def test_accumulate_result_is_order_independent():
    rs = [report(i, 9, v, h(v)) for i, v in enumerate((3, 6, 5))]
    rng = random.Random(1)
    chosen = set()
    for _ in range(10):
        rng.shuffle(rs)
        c = component().accumulate(rs)
        chosen.add((c.chosen_prepared_view, c.chosen_block_hash))
    assert chosen == {(6, h(6))}


def test_accumulate_rejects_forged_report():
    good = report(1, 8, 4, h(4))
    forged = NewViewReport(8, 7, h(7), 2, crypto.sign(KEYS[1], report_payload(8, 7, h(7))))
    with pytest.raises(InsufficientQuorum):
        component().accumulate([good, forged])


def test_accumulate_counts_a_signer_once():
    with pytest.raises(InsufficientQuorum):
        component().accumulate([report(1, 8, 4, h(4)), report(1, 8, 5, h(5))])


def test_accumulate_mixed_targets():
    with pytest.raises(InconsistentViews):
        component().accumulate([report(1, 8, 4, h(4)), report(2, 9, 4, h(4))])


def test_new_view_report_uses_recorded_prepare():
    tc = component()
    assert tc.sign_new_view(1).prepared_hash == GENESIS.hash
    tc.checker_record_prepared(prepare_qc(3, h(3)))
    r = tc.sign_new_view(4)
    assert (r.prepared_view, r.prepared_hash) == (3, h(3))
    with pytest.raises(CheckerRefusal):
        tc.sign_new_view(4)


def test_sign_proposal_must_extend_certified_block():
    tc = component()
    cert = tc.accumulate([report(0, 1, 0, GENESIS.hash), report(1, 1, 0, GENESIS.hash)])
    with pytest.raises(CheckerRefusal):
        tc.sign_proposal(Block(1, 1, h("other")), cert)
    other = component(1).accumulate([report(0, 1, 0, GENESIS.hash), report(1, 1, 0, GENESIS.hash)])
    with pytest.raises(InvalidCertificate):
        tc.sign_proposal(Block(1, 1, GENESIS.hash), other)
    vote = tc.sign_proposal(Block(1, 1, GENESIS.hash), cert)
    assert vote.phase is Phase.PREPARE


def test_key_is_not_exposed():
    tc = component()
    assert not hasattr(tc, "key") and not hasattr(tc, "_key")


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.sampled_from([Phase.PREPARE, Phase.COMMIT]), st.integers(0, 3)), max_size=30))
def test_never_two_signatures_per_view_and_phase(calls):
    tc = component()
    signed = {}
    for view, phase, b in calls:
        if phase is Phase.COMMIT and b % 2 == 0:
            try:
                tc.checker_record_prepared(prepare_qc(view, h(b)))
            except InvalidCertificate:  # pragma: no cover
                pass
        try:
            tc.checker_sign(view, phase, h(b))
        except CheckerRefusal:
            continue
        assert (view, phase) not in signed
        assert all(v < view for (v, p) in signed if p is phase)
        signed[(view, phase)] = b
