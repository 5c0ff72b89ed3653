"""Replicate a door-lock controller across three ECUs and drive it through the proxy.

Run:  python3 demos/01_door_lock_quickstart.py
"""

from irsbft import Cluster
from irsbft.irs.apps import DoorLock

# a hybrid cluster tolerates one faulty node with three replicas
cluster = Cluster("hybrid", f=1)
cluster.register_app(DoorLock)
print(f"{len(cluster.replicas)} replicas, quorum {cluster.config.quorum}")

for cmd, label in [
    (DoorLock.query(2), "QUERY(2)"),
    (DoorLock.unlock(2), "UNLOCK(2)"),
    (DoorLock.query(2), "QUERY(2)"),
    (DoorLock.lock(7), "LOCK(7)"),  # only doors 1-4 exist
]:
    result = cluster.submit(cmd)
    print(f"{label:10s} -> {result.decode()}")

# every replica reached the same state
cluster.run_until(lambda: all(len(r.executed) == 4 for r in cluster.replicas), max_time=1)
for r in cluster.replicas:
    print(f"replica {r.id}: height={r.height} snapshot={r.apps.snapshot().hex()[:16]}")

outcome = cluster.proxy().outcomes[2]
print(f"UNLOCK took {outcome.latency_ms:.3f} ms of virtual time, replies from {sorted(outcome.replies)}")
