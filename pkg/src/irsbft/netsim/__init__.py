from .config import NetConfig, load_config, parse_config
from .links import PRESET_NAMES, LinkModel, frames, link_delay, preset, transmission_time
from .runtime import (
    CLIENT_ADDRESS_BASE,
    DeadlockError,
    RoutingError,
    VirtualNetwork,
    WallNetwork,
    client_address,
    is_client_address,
    make_network,
)
from .trace import HEADER as TRACE_HEADER
from .trace import Trace, TraceRow, read_csv

__all__ = [
    "CLIENT_ADDRESS_BASE",
    "DeadlockError",
    "LinkModel",
    "NetConfig",
    "PRESET_NAMES",
    "RoutingError",
    "TRACE_HEADER",
    "Trace",
    "TraceRow",
    "VirtualNetwork",
    "WallNetwork",
    "client_address",
    "frames",
    "is_client_address",
    "link_delay",
    "load_config",
    "make_network",
    "parse_config",
    "preset",
    "read_csv",
    "transmission_time",
]
