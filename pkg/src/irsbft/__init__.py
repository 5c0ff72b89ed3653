"""BFT state-machine replication for in-vehicle networks: HotStuff and a hybrid-fault variant."""

from .cluster import Cluster, SafetyViolation
from .consensus import DivergenceError, FaultMode, FaultProfile, HotStuffReplica, HybridReplica
from .core import (
    GENESIS,
    Block,
    ClusterConfig,
    ConfigError,
    Phase,
    Protocol,
    QuorumCertificate,
    Transaction,
    Vote,
    leader_of,
    quorum_size,
    tx_wire_size,
)
from .crypto import REFERENCE_COSTS, ZERO_COSTS, CryptoCosts
from .netsim import NetConfig

__all__ = [
    "GENESIS",
    "REFERENCE_COSTS",
    "ZERO_COSTS",
    "Block",
    "Cluster",
    "ClusterConfig",
    "ConfigError",
    "CryptoCosts",
    "DivergenceError",
    "FaultMode",
    "FaultProfile",
    "HotStuffReplica",
    "HybridReplica",
    "NetConfig",
    "Phase",
    "Protocol",
    "QuorumCertificate",
    "SafetyViolation",
    "Transaction",
    "Vote",
    "leader_of",
    "quorum_size",
    "tx_wire_size",
]
