"""Silent leaders and the exponential view timer.

With f=2 (seven HotStuff replicas), replicas 1 and 2 go silent, so views 1
and 2 both time out. The third view waits four times the base timeout
and then commits under replica 3; the next commit resets the back-off.

Run:  python3 demos/05_view_change.py
"""

from irsbft import Cluster
from irsbft.consensus import FaultMode, FaultProfile
from irsbft.irs.proxy import LoadSpec

silent = FaultProfile(FaultMode.SILENT)
cluster = Cluster("hotstuff", f=2, faults={1: silent, 2: silent}, timeout_base=0.1)
observer = cluster.replicas[0]
proxy = cluster.proxy()
proxy.set_load(LoadSpec(3, 0.0, 1, b"x"))

seen = set()


def log_view():
    v = observer.current_view
    if v not in seen:
        seen.add(v)
        t = cluster.net.time_ns / 1e6
        print(f"t={t:8.2f} ms  view {v}  leader {cluster.config.leader(v)}  height {observer.height}  timeout {observer.timeout_ns / 1e6:.0f} ms")
    return proxy.load_done


cluster.run_until(log_view, max_time=10)
for tx_id, o in sorted(proxy.outcomes.items()):
    print(f"tx {tx_id}: {o.latency_ms:.2f} ms")
for line in observer.audit:
    print("audit:", line)
