import math
from collections import Counter

import pytest

from irsbft import Cluster, crypto
from irsbft.bench.experiments import ExperimentConfig, run_latency_experiment
from irsbft.consensus import DivergenceError, FaultMode, FaultProfile, NotLeader, NotReady
from irsbft.core import (
    GENESIS,
    GENESIS_QC,
    Block,
    Phase,
    Protocol,
    Transaction,
    Vote,
    form_qc,
    proposal_payload,
    request_payload,
    vote_payload,
)
from irsbft.irs.proxy import LoadSpec
from irsbft.netsim.config import NetConfig
from irsbft.wire import CertMsg, Proposal, Request, VoteMsg


def signed_request(cluster, tx_id, payload=b"", client=0):
    tx = Transaction(client, tx_id, payload=payload)
    return Request(client, tx, crypto.sign(cluster.client_keys[client], request_payload(tx)))


def run_load(cluster, count, payload=b"", max_time=60):
    p = cluster.proxy()
    p.set_load(LoadSpec(count, 0.0, 1, payload))
    cluster.run_until(lambda: p.load_done, max_time=max_time)
    return p


def vote_keys(cluster):
    if cluster.protocol is Protocol.HOTSTUFF:
        return cluster.replica_keys
    return [crypto.gen_keypair(crypto.derive_seed(cluster.seed, "checker", i)) for i in range(len(cluster.replicas))]


def make_vote(cluster, voter, view, phase, block_hash):
    key = vote_keys(cluster)[voter]
    return Vote(view, phase, block_hash, voter, crypto.sign(key, vote_payload(view, phase, block_hash)))


# -- client requests -------------------------------------------------------------------------


def test_request_dedup_and_forgery():
    c = Cluster(Protocol.HOTSTUFF)
    r = c.replicas[0]
    req = signed_request(c, 1)
    r.on_request(c.proxy().address, req)
    assert len(r.mempool) == 1
    r.on_request(c.proxy().address, req)
    assert len(r.mempool) == 1
    forged = Request(0, Transaction(0, 2), b"\x00" * 64)
    r.on_request(c.proxy().address, forged)
    assert len(r.mempool) == 1
    assert any("bad client signature" in line for line in r.audit)


def test_request_from_spoofed_channel_is_dropped():
    c = Cluster(Protocol.HOTSTUFF)
    r = c.replicas[0]
    r.on_message(c.proxy().address, Request(3, Transaction(3, 1), b""))
    assert not r.mempool and r.audit


# -- proposing --------------------------------------------------------------------------------------


@pytest.mark.parametrize("protocol", list(Protocol))
def test_first_block_has_one_tx_and_extends_genesis(protocol):
    c = Cluster(protocol)
    run_load(c, 1, b"hi")
    for r in c.correct_replicas:
        block = r.chain[1]
        assert block.parent_hash == GENESIS.hash and block.view == 1
        assert [tx.payload for tx in block.transactions] == [b"hi"]


@pytest.mark.parametrize("protocol", list(Protocol))
def test_batch_caps_block_at_400(protocol):
    c = Cluster(protocol, batch_size=400, trace=False)
    txs = [Transaction(0, i + 1) for i in range(500)]
    for r in c.replicas:
        for tx in txs:
            r.mempool[tx.key] = tx
    c.run_until(lambda: c.committed_height() >= 2, max_time=30)
    ref = c.replicas[0]
    assert [len(b.transactions) for b in ref.chain[1:3]] == [400, 100]


def test_hybrid_leader_needs_accumulator_cert():
    c = Cluster(Protocol.HYBRID)
    leader = c.replicas[1]
    leader.current_view = 1
    leader.mempool[(0, 1)] = Transaction(0, 1)
    with pytest.raises(NotReady):
        leader.propose()
    backup = c.replicas[2]
    backup.current_view = 1
    with pytest.raises(NotLeader):
        backup.propose()


def test_hotstuff_leader_needs_new_view_quorum():
    c = Cluster(Protocol.HOTSTUFF)
    leader = c.replicas[1]
    leader.current_view = 1
    leader.mempool[(0, 1)] = Transaction(0, 1)
    with pytest.raises(NotReady):
        leader.propose()


# -- voting -------------------------------------------------------------------------------------


@pytest.mark.parametrize("protocol,quorum", [(Protocol.HOTSTUFF, 3), (Protocol.HYBRID, 2)])
def test_qc_forms_at_quorum_of_distinct_voters(protocol, quorum):
    c = Cluster(protocol)
    leader = c.replicas[1]
    block = Block(1, 1, GENESIS.hash)
    leader.proposed[1] = [block]
    voters = [v for v in range(len(c.replicas)) if v != 1][:quorum]
    first = make_vote(c, voters[0], 1, Phase.PREPARE, block.hash)
    assert leader.on_vote(voters[0], VoteMsg(voters[0], first)) is None
    assert leader.on_vote(voters[0], VoteMsg(voters[0], first)) is None  # duplicate
    qc = None
    for v in voters[1:]:
        qc = leader.on_vote(v, VoteMsg(v, make_vote(c, v, 1, Phase.PREPARE, block.hash)))
    assert qc is not None and len(qc.signers) == quorum


def test_vote_with_bad_signature_is_audited():
    c = Cluster(Protocol.HOTSTUFF)
    leader = c.replicas[1]
    block = Block(1, 1, GENESIS.hash)
    leader.proposed[1] = [block]
    bad = Vote(1, Phase.PREPARE, block.hash, 2, b"\x01" * 64)
    assert leader.on_vote(2, VoteMsg(2, bad)) is None
    assert any("bad signature" in line for line in leader.audit)


def _view_rounds(protocol):
    c = Cluster(protocol, net=NetConfig(bandwidth_override_mbps=math.inf))
    run_load(c, 3)
    view = c.replicas[0].chain[2].view
    rows = [r for r in c.net.trace if r.view == view]
    leader = c.config.leader(view)
    vote_phases = {r.phase for r in rows if r.event == "send_vote"}
    broadcasts = {(r.event, r.phase) for r in rows if r.replica_id == leader and r.event in ("send_proposal", "send_cert")}
    return len(vote_phases), len(broadcasts)


def test_hybrid_has_one_fewer_vote_round():
    hs_votes, hs_bcast = _view_rounds(Protocol.HOTSTUFF)
    hy_votes, hy_bcast = _view_rounds(Protocol.HYBRID)
    assert (hs_votes, hs_bcast) == (3, 4)
    assert (hy_votes, hy_bcast) == (2, 3)
    assert hy_votes == hs_votes - 1


@pytest.mark.parametrize("protocol,hops", [(Protocol.HOTSTUFF, 9), (Protocol.HYBRID, 7)])
def test_hop_count_oracle(protocol, hops):
    cfg = ExperimentConfig(protocol, repetitions=1, views_per_repetition=10, bandwidth_override_mbps=math.inf, costs=crypto.ZERO_COSTS)
    summary = run_latency_experiment(cfg)
    assert {round(s.latency_ms, 9) for s in summary.samples} == {round(hops * 0.4, 9)}


@pytest.mark.parametrize("protocol,signs", [(Protocol.HOTSTUFF, 6), (Protocol.HYBRID, 5)])
def test_sign_cost_adds_once_per_critical_path_signature(protocol, signs):
    def steady(sign):
        cfg = ExperimentConfig(
            protocol, repetitions=1, views_per_repetition=8, bandwidth_override_mbps=math.inf, costs=crypto.CryptoCosts(sign=sign)
        )
        return [s.latency_ms for s in run_latency_experiment(cfg).samples[1:]]  # first view also pays set-up

    base, doubled = steady(100e-6), steady(200e-6)
    for a, b in zip(base, doubled):
        assert b - a == pytest.approx(signs * 0.1)


# -- safety rules -----------------------------------------------------------------------------------


def test_proposal_conflicting_with_lock_is_rejected():
    c = Cluster(Protocol.HOTSTUFF)
    r = c.replicas[2]
    locked = Block(1, 3, GENESIS.hash, (Transaction(0, 1),))
    r._store(locked)
    r.locked_qc = form_qc([make_vote(c, v, 3, Phase.PRE_COMMIT, locked.hash) for v in (0, 1, 2)])
    r.current_view = 4
    fork = Block(1, 4, GENESIS.hash, (Transaction(0, 2),))
    leader = c.config.leader(4)
    sig = crypto.sign(c.replica_keys[leader], proposal_payload(4, fork.hash))
    assert r.on_proposal(leader, Proposal(leader, 4, fork, GENESIS_QC, None, sig)) is None
    assert any("locked" in line for line in r.audit)
    assert not r.safe_node(fork.parent_hash, GENESIS_QC)


def test_newer_justification_unlocks():
    c = Cluster(Protocol.HOTSTUFF)
    r = c.replicas[2]
    locked = Block(1, 3, GENESIS.hash, (Transaction(0, 1),))
    other = Block(1, 4, GENESIS.hash, (Transaction(0, 2),))
    r._store(locked)
    r._store(other)
    r.locked_qc = form_qc([make_vote(c, v, 3, Phase.PRE_COMMIT, locked.hash) for v in (0, 1, 2)])
    newer = form_qc([make_vote(c, v, 4, Phase.PREPARE, other.hash) for v in (0, 1, 3)])
    r.current_view = 5
    child = Block(2, 5, other.hash)
    leader = c.config.leader(5)
    sig = crypto.sign(c.replica_keys[leader], proposal_payload(5, child.hash))
    vote = r.on_proposal(leader, Proposal(leader, 5, child, newer, None, sig))
    assert vote is not None and vote.block_hash == child.hash


def test_stale_certificate_is_ignored():
    c = Cluster(Protocol.HOTSTUFF)
    r = c.replicas[2]
    block = Block(1, 1, GENESIS.hash)
    r._store(block)
    r.current_view = 2
    qc = form_qc([make_vote(c, v, 1, Phase.PREPARE, block.hash) for v in (0, 1, 2)])
    assert r.on_cert(1, CertMsg(1, Phase.PRE_COMMIT, qc)) is None
    assert r.prepared_qc is GENESIS_QC and (1, Phase.PRE_COMMIT) not in r.voted


@pytest.mark.parametrize("protocol", list(Protocol))
def test_equivocating_leader_gets_at_most_one_vote_per_replica(protocol):
    faults = {1: FaultProfile(FaultMode.EQUIVOCATE)}
    c = Cluster(protocol, faults=faults, timeout_base=0.05)
    p = c.proxy()
    p.set_load(LoadSpec(20, 0.0, 1))
    c.run_until(lambda: min(r.current_view for r in c.correct_replicas) > 12, max_time=60)
    assert c.check_safety()
    correct = {r.id for r in c.correct_replicas}
    votes = Counter((row.replica_id, row.view, row.phase) for row in c.net.trace if row.event == "send_vote" and row.replica_id in correct)
    assert votes and max(votes.values()) == 1
    assert c.committed_height() >= 5


# -- commit --------------------------------------------------------------------------------------


def test_one_tx_commit_sends_one_reply_per_replica():
    c = Cluster(Protocol.HOTSTUFF)
    run_load(c, 1)
    c.run_until(lambda: all(r.height >= 1 for r in c.replicas), max_time=5)
    per_replica = Counter(row.replica_id for row in c.net.trace if row.event == "send_reply")
    assert per_replica == Counter({0: 1, 1: 1, 2: 1, 3: 1})


def test_commit_skipping_height_raises():
    c = Cluster(Protocol.HOTSTUFF)
    r = c.replicas[0]
    skip = Block(2, 2, crypto.digest(b"missing"))
    with pytest.raises(DivergenceError):
        r._execute(skip)


def test_commit_of_conflicting_height_raises():
    c = Cluster(Protocol.HOTSTUFF)
    run_load(c, 2)
    r = c.replicas[0]
    rival = Block(1, 9, GENESIS.hash, (Transaction(0, 99),))
    r._store(rival)
    with pytest.raises(DivergenceError):
        r.commit(rival.hash)


def test_correct_replicas_commit_identical_blocks():
    c = Cluster(Protocol.HOTSTUFF, net=NetConfig(jitter_us=500, seed=3))
    run_load(c, 15)
    c.run_until(lambda: min(r.height for r in c.replicas) >= 15, max_time=10)
    chains = {tuple(b.hash for b in r.chain[:16]) for r in c.replicas}
    assert len(chains) == 1


def test_missing_block_is_fetched_before_commit():
    c = Cluster(Protocol.HOTSTUFF)
    r3 = c.replicas[3]
    original = r3.on_proposal
    r3.on_proposal = lambda src, msg: None if msg.view == 1 else original(src, msg)
    run_load(c, 2)
    c.run_until(lambda: r3.height >= 2, max_time=10)
    assert r3.chain[1].hash == c.replicas[0].chain[1].hash
    assert any(row.event == "send_blockreq" and row.replica_id == 3 for row in c.net.trace)


# -- pacemaker and faults ---------------------------------------------------------------------------


@pytest.mark.parametrize("protocol", list(Protocol))
def test_silent_leader_triggers_view_change(protocol):
    c = Cluster(protocol, faults={1: FaultProfile(FaultMode.SILENT)}, timeout_base=0.05)
    run_load(c, 1)
    for r in c.correct_replicas:
        assert r.current_view >= 2
        assert r.chain[1].view == 2  # proposed by the next leader
    assert any("timed out" in line for r in c.correct_replicas for line in r.audit)


def test_timeout_doubles_per_consecutive_failure_and_resets_on_commit():
    base = 0.05
    c = Cluster(Protocol.HOTSTUFF, 2, faults={1: FaultProfile(FaultMode.SILENT), 2: FaultProfile(FaultMode.SILENT)}, timeout_base=base)
    r = c.replicas[0]
    p = c.proxy()
    p.set_load(LoadSpec(2, 0.0, 1))
    c.run_until(lambda: r.current_view == 3, max_time=5)
    assert r.failures == 2 and r.timeout_ns == 4 * int(base * 1e9)
    c.run_until(lambda: r.height >= 1, max_time=5)
    assert r.failures == 0 and r.timeout_ns == int(base * 1e9)


def test_crash_of_one_backup_keeps_committing():
    c = Cluster(Protocol.HOTSTUFF, faults={3: FaultProfile(FaultMode.CRASH)})
    run_load(c, 10)
    assert c.committed_height() >= 10


def test_two_crashes_stop_commits_but_not_safety():
    crash = FaultProfile(FaultMode.CRASH)
    c = Cluster(Protocol.HOTSTUFF, faults={2: crash, 3: crash}, timeout_base=0.05, deadline=3.0)
    p = c.proxy()
    p.set_load(LoadSpec(1, 0.0, 1))
    c.run_until(lambda: p.load_done, max_time=10)
    assert all(r.height == 0 for r in c.replicas)
    assert p.accepted == 0
    assert c.check_safety()


def test_delayed_replica_is_tolerated():
    c = Cluster(Protocol.HYBRID, faults={2: FaultProfile(FaultMode.DELAY, delay=0.05)})
    run_load(c, 5)
    assert c.committed_height() >= 5


def test_fault_activation_view():
    c = Cluster(Protocol.HOTSTUFF, faults={0: FaultProfile(FaultMode.CRASH, activation_view=4)})
    r = c.replicas[0]
    run_load(c, 6)
    assert r.height >= 2 and r.crashed


def test_fault_profile_parse():
    assert FaultProfile.parse("delay:20").delay == pytest.approx(0.020)
    assert FaultProfile.parse("delay").delay == pytest.approx(0.050)
    assert FaultProfile.parse("Equivocate", 3) == FaultProfile(FaultMode.EQUIVOCATE, 3)
    assert not FaultProfile().byzantine and FaultProfile(FaultMode.SILENT).byzantine
    with pytest.raises(ValueError):
        FaultProfile.parse("sleepy")
