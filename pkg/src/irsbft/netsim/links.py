"""Link models for in-vehicle networks and the delivery-time formula."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..core import ConfigError

DEFAULT_PROPAGATION = 0.0004  # seconds, one-way


@dataclass(frozen=True)
class LinkModel:
    name: str
    bandwidth: float  # bits per second; math.inf allowed
    propagation: float = DEFAULT_PROPAGATION  # seconds
    max_frame: int = 1500  # bytes
    per_frame_overhead: int = 0  # bytes

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ConfigError("bandwidth must be positive")
        if self.propagation < 0:
            raise ConfigError("propagation must be >= 0")
        if self.max_frame <= 0:
            raise ConfigError("max_frame must be positive")
        if self.per_frame_overhead < 0:
            raise ConfigError("per_frame_overhead must be >= 0")

    def with_(self, **changes) -> "LinkModel":
        return replace(self, **changes)


# name -> (bits per second, max frame bytes)
_TABLE = {
    "CAN-FD": (8e6, 64),
    "CAN-XL": (10e6, 2048),
    "FlexRay": (10e6, 254),
    "10BASE-T1": (10e6, 1500),
    "100BASE-T1": (100e6, 1500),
    "1000BASE-T1": (1000e6, 1500),
}
PRESET_NAMES = tuple(_TABLE)


def preset(name: str, propagation: float = DEFAULT_PROPAGATION, per_frame_overhead: int = 0) -> LinkModel:
    try:
        bandwidth, frame = _TABLE[name]
    except KeyError:
        raise ConfigError(f"unknown link preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}") from None
    return LinkModel(name, bandwidth, propagation, frame, per_frame_overhead)


def frames(size: int, link: LinkModel) -> int:
    return max(1, math.ceil(size / link.max_frame))


def transmission_time(size: int, link: LinkModel) -> float:
    """Seconds to clock ``size`` bytes (plus framing) onto the wire."""
    if math.isinf(link.bandwidth):
        return 0.0
    on_wire = size + link.per_frame_overhead * frames(size, link)
    return on_wire * 8 / link.bandwidth


def link_delay(size: int, link: LinkModel) -> float:
    """Propagation plus back-to-back transmission of every frame."""
    if size <= 0:
        raise ValueError("message size must be positive")
    return link.propagation + transmission_time(size, link)
