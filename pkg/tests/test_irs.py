import pytest

from irsbft import Cluster, crypto
from irsbft.consensus import FaultMode, FaultProfile
from irsbft.core import Protocol, reply_payload
from irsbft.irs.apps import (
    ERR,
    OK,
    AppRegistry,
    DoorLock,
    DoorState,
    OtaValidator,
    RegistrationError,
    command,
    split_command,
)
from irsbft.irs.proxy import ACCEPTED, DIVERGENT, LoadSpec, ReplyDivergence, Unavailable
from irsbft.wire import Reply

FW = crypto.digest(b"firmware v2.1")


class Logged:
    """Wraps an app and records every command it is handed."""

    def __init__(self, app):
        self.inner = app
        self.app_id = app.app_id
        self.seen = []

    def apply(self, body):
        self.seen.append(body)
        return self.inner.apply(body)

    def snapshot(self):
        return self.inner.snapshot()


def door_cluster(protocol=Protocol.HOTSTUFF, **kw):
    c = Cluster(protocol, **kw)
    c.register_app(DoorLock)
    return c


# -- apps ---------------------------------------------------------------------------------------


def test_door_lock_semantics():
    reg = AppRegistry()
    reg.register(DoorLock())
    assert reg.execute(DoorLock.query(1)) == b"Locked"
    assert reg.execute(DoorLock.unlock(1)) == OK
    assert reg.execute(DoorLock.query(1)) == DoorState.UNLOCKED.value.encode() == b"Unlocked"
    assert reg.execute(DoorLock.lock(7)) == ERR
    assert reg.execute(command(1, 9, b"\x01")) == ERR
    assert reg.execute(command(1, 1)) == ERR


def test_ota_semantics():
    reg = AppRegistry()
    reg.register(OtaValidator())
    assert reg.execute(OtaValidator.check(FW)) == b"REJECT"
    assert reg.execute(OtaValidator.approve(FW)) == OK
    assert reg.execute(OtaValidator.check(FW)) == b"ACCEPT"
    assert reg.execute(OtaValidator.check(FW[:5])) == ERR


def test_registry_rules():
    reg = AppRegistry()
    reg.register(DoorLock())
    with pytest.raises(RegistrationError):
        reg.register(DoorLock())
    null = Logged(DoorLock())
    null.app_id = 0
    with pytest.raises(RegistrationError):
        reg.register(null)
    assert reg.execute(b"\x01") == b""
    assert reg.execute(command(0, 5, b"xyz")) == b""
    assert reg.execute(command(42, 1)) == b"" and reg.audit
    assert split_command(command(513, 3, b"z")) == (513, b"\x03z")


def test_snapshot_tracks_state():
    a, b = DoorLock(), DoorLock()
    assert a.snapshot() == b.snapshot()
    a.apply(DoorLock.unlock(3)[2:])
    assert a.snapshot() != b.snapshot()


# -- proxy end to end ---------------------------------------------------------------------------------


@pytest.mark.parametrize("protocol", list(Protocol))
def test_lock_on_healthy_cluster(protocol):
    c = door_cluster(protocol)
    assert c.submit(DoorLock.unlock(2)) == OK
    assert c.submit(DoorLock.lock(2)) == OK
    assert c.submit(DoorLock.query(2)) == b"Locked"
    c.run_until(lambda: all(len(r.executed) == 3 for r in c.replicas), max_time=5)
    assert len({r.apps.snapshot() for r in c.replicas}) == 1


def test_one_crashed_replica_still_answers():
    c = door_cluster(faults={3: FaultProfile(FaultMode.CRASH)})
    assert c.submit(DoorLock.unlock(1)) == OK
    assert c.submit(DoorLock.query(1)) == b"Unlocked"


@pytest.mark.parametrize("protocol", list(Protocol))
def test_garbage_replies_are_outvoted(protocol):
    c = door_cluster(protocol, faults={2: FaultProfile(FaultMode.EQUIVOCATE)})
    assert c.submit(DoorLock.query(4)) == b"Locked"
    outcome = c.proxy().outcomes[1]
    assert outcome.status == ACCEPTED


def test_unavailable_when_quorum_is_gone():
    crash = FaultProfile(FaultMode.CRASH)
    c = door_cluster(faults={0: crash, 3: crash}, deadline=1.0, timeout_base=0.05)
    with pytest.raises(Unavailable):
        c.submit(DoorLock.lock(1))


def test_divergent_replies_raise_alarm():
    c = Cluster(Protocol.HOTSTUFF)
    p = c.proxy()
    tx = p.send_tx(b"cmd")
    for r, key in enumerate(c.replica_keys):
        result = bytes([r])
        sig = crypto.sign(key, reply_payload(0, tx.tx_id, result))
        p.on_message(r, Reply(r, 0, tx.tx_id, result, sig))
    assert p.outcomes[tx.tx_id].status == DIVERGENT


def test_unsigned_replies_do_not_count():
    c = Cluster(Protocol.HOTSTUFF)
    p = c.proxy()
    tx = p.send_tx(b"cmd")
    for r in range(4):
        p.on_message(r, Reply(r, 0, tx.tx_id, b"OK", b"\x00" * 64))
    assert not p.outcomes[tx.tx_id].done


def test_submit_surfaces_divergence():
    c = door_cluster(Protocol.HYBRID)
    p = c.proxy()
    # every replica but 0 has its reply rewritten (and re-signed) to a distinct value
    original = p.on_message

    def scramble(src, msg):
        if isinstance(msg, Reply) and src != 0:
            result = bytes([src]) + msg.result
            sig = crypto.sign(c.replica_keys[src], reply_payload(msg.client_id, msg.tx_id, result))
            msg = Reply(msg.sender, msg.client_id, msg.tx_id, result, sig)
        original(src, msg)

    p.on_message = scramble
    with pytest.raises(ReplyDivergence):
        c.submit(DoorLock.query(1))


def test_retransmission_is_idempotent():
    c = door_cluster(retransmit=0.001)
    p = c.proxy()
    p.set_load(LoadSpec(5, 0.0, 1, DoorLock.unlock(1)))
    c.run_until(lambda: p.load_done, max_time=10)
    c.run_until(lambda: all(len(r.executed) == 5 for r in c.replicas), max_time=1)
    assert p.accepted == 5
    for r in c.replicas:
        assert len(r.executed) == 5
        assert len({tx.key for tx, _ in r.executed}) == 5
    requests = sum(1 for row in c.net.trace if row.event == "recv_request")
    assert requests > 5 * 4  # retransmissions really happened


def test_two_apps_interleave_in_commit_order():
    c = Cluster(Protocol.HOTSTUFF)
    doors = [Logged(DoorLock()) for _ in c.replicas]
    otas = [Logged(OtaValidator()) for _ in c.replicas]
    for r, d, o in zip(c.replicas, doors, otas):
        r.apps.register(d)
        r.apps.register(o)
    script = [
        (DoorLock.unlock(1), OK),
        (OtaValidator.check(FW), b"REJECT"),
        (OtaValidator.approve(FW), OK),
        (DoorLock.query(1), b"Unlocked"),
        (OtaValidator.check(FW), b"ACCEPT"),
    ]
    for cmd, expected in script:
        assert c.submit(cmd) == expected
    c.run_until(lambda: all(len(r.executed) == len(script) for r in c.replicas), max_time=5)
    for d, o in zip(doors, otas):
        assert d.seen == [cmd[2:] for cmd, _ in script if cmd[0] == 1]
        assert o.seen == [cmd[2:] for cmd, _ in script if cmd[0] == 2]


def test_unregistered_app_commits_as_noop():
    c = door_cluster()
    assert c.submit(command(77, 1, b"?")) == b""
    c.run_until(lambda: all(r.apps.audit for r in c.replicas), max_time=5)
    assert c.committed_height() >= 1


def test_open_loop_window_limits_outstanding():
    c = Cluster(Protocol.HYBRID, trace=False, batch_size=50)
    p = c.proxy()
    p.set_load(LoadSpec(40, 100e-6, 3))
    peak = 0

    def watch():
        nonlocal peak
        peak = max(peak, len(p.pending))
        return p.load_done

    c.run_until(watch, max_time=30)
    assert p.accepted == 40 and peak <= 3
