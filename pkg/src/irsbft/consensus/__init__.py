"""Replica implementations for both protocols."""

from ..core import Protocol
from .faults import CORRECT, FaultMode, FaultProfile
from .hotstuff import HotStuffReplica
from .hybrid import HybridReplica
from .replica import CommitRecord, DivergenceError, NotLeader, NotReady, Replica

REPLICA_CLASSES = {Protocol.HOTSTUFF: HotStuffReplica, Protocol.HYBRID: HybridReplica}

__all__ = [
    "CORRECT",
    "CommitRecord",
    "DivergenceError",
    "FaultMode",
    "FaultProfile",
    "HotStuffReplica",
    "HybridReplica",
    "NotLeader",
    "NotReady",
    "REPLICA_CLASSES",
    "Replica",
]
