"""Watch an equivocating leader fail to split the cluster.

Replica 1 leads view 1 (and every fourth view after). From view 1 on it
sends one block to half the replicas and a conflicting block to the other
half. The one-vote rule (HotStuff) or the trusted checker (hybrid) makes
sure at most one of them gathers a quorum.

Run:  python3 demos/02_byzantine_leader.py
"""

from collections import Counter

from irsbft import Cluster
from irsbft.consensus import FaultMode, FaultProfile
from irsbft.irs.proxy import LoadSpec
from irsbft.netsim.config import NetConfig

for protocol in ("hotstuff", "hybrid"):
    cluster = Cluster(protocol, net=NetConfig(jitter_us=200, seed=3), faults={1: FaultProfile(FaultMode.EQUIVOCATE, 1)})
    proxy = cluster.proxy()
    proxy.set_load(LoadSpec(40, 0.0, 1, b"payload!"))
    cluster.run_until(lambda: proxy.load_done, max_time=60)

    cluster.check_safety()  # raises SafetyViolation otherwise
    byz_views = [v for v in range(1, max(r.current_view for r in cluster.replicas)) if v % len(cluster.replicas) == 1]
    votes = Counter(
        (row.replica_id, row.view, row.phase)
        for row in cluster.net.trace
        if row.event == "send_vote" and row.replica_id != 1
    )
    refusals = sum("refused" in line or "rejected" in line for r in cluster.replicas for line in r.audit)
    print(
        f"{protocol:8s} accepted={proxy.accepted}/40 height={cluster.committed_height()} "
        f"views led by the equivocator={len(byz_views)} max votes per (replica, view, phase)={max(votes.values())} "
        f"audit rejections={refusals}"
    )
