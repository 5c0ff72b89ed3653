"""Plain-text ``key=value`` network configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from ..core import ConfigError
from .links import DEFAULT_PROPAGATION, LinkModel, preset

CLOCK_MODES = ("virtual", "wall")


@dataclass(frozen=True)
class NetConfig:
    preset: str = "10BASE-T1"
    propagation_ms: float = DEFAULT_PROPAGATION * 1e3
    bandwidth_override_mbps: float | None = None
    per_frame_overhead_bytes: int = 0
    seed: int = 0
    clock_mode: str = "virtual"
    jitter_us: float = 0.0

    def __post_init__(self):
        if self.clock_mode not in CLOCK_MODES:
            raise ConfigError(f"clock_mode must be one of {CLOCK_MODES}, got {self.clock_mode!r}")
        self.link()  # validates the preset name and numeric ranges

    def link(self) -> LinkModel:
        link = preset(self.preset, self.propagation_ms / 1e3, self.per_frame_overhead_bytes)
        if self.bandwidth_override_mbps is not None:
            link = link.with_(bandwidth=self.bandwidth_override_mbps * 1e6)
        return link


def parse_config(text: str) -> NetConfig:
    known = {f.name: f for f in fields(NetConfig)}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}; valid keys: {', '.join(known)}")
        try:
            if key in ("preset", "clock_mode"):
                values[key] = value
            elif key in ("seed", "per_frame_overhead_bytes"):
                values[key] = int(value)
            elif key == "bandwidth_override_mbps" and value.lower() in ("", "none"):
                values[key] = None
            else:
                values[key] = float(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key}") from None
    return NetConfig(**values)


def load_config(path: str | os.PathLike) -> NetConfig:
    with open(path) as fh:
        return parse_config(fh.read())
