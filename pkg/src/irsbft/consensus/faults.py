from __future__ import annotations

import enum
from dataclasses import dataclass


class FaultMode(str, enum.Enum):
    CORRECT = "correct"
    CRASH = "crash"
    EQUIVOCATE = "equivocate"
    SILENT = "silent"
    DELAY = "delay"


@dataclass(frozen=True)
class FaultProfile:
    """Behaviour injected into one replica from ``activation_view`` on.

    * CRASH: stops handling anything.
    * SILENT: keeps processing input but drops all outbound messages.
    * DELAY: defers every outbound message by ``delay`` seconds.
    * EQUIVOCATE: as leader, sends conflicting proposals to disjoint halves of
      the other replicas; ignores the one-vote rule; returns corrupted results
      to clients.
    """

    mode: FaultMode = FaultMode.CORRECT
    activation_view: int = 0
    delay: float = 0.0

    @property
    def byzantine(self) -> bool:
        return self.mode is not FaultMode.CORRECT

    @classmethod
    def parse(cls, text: str, activation_view: int = 0) -> "FaultProfile":
        """``correct|crash|silent|equivocate|delay[:ms]``."""
        name, _, arg = text.partition(":")
        mode = FaultMode(name.strip().lower())
        delay = float(arg) / 1e3 if arg else (0.050 if mode is FaultMode.DELAY else 0.0)
        return cls(mode, activation_view, delay)


CORRECT = FaultProfile()
