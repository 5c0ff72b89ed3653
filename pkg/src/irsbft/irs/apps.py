"""Deterministic replicated applications and the per-replica app registry.

A command is ``[app_id: 2 B LE][op: 1 B][args...]``. App id 0 is reserved
for opaque benchmark payloads: commands for it (and payloads shorter than
two bytes) execute as no-ops with an empty result.
"""

from __future__ import annotations

import enum
import struct
from typing import Protocol as TypingProtocol

from ..crypto import digest

NULL_APP_ID = 0
DOOR_LOCK_APP_ID = 1
OTA_APP_ID = 2

OK = b"OK"
ERR = b"ERR"


class RegistrationError(ValueError):
    pass


class StateMachine(TypingProtocol):
    app_id: int

    def apply(self, command: bytes) -> bytes: ...

    def snapshot(self) -> bytes: ...


def command(app_id: int, op: int, args: bytes = b"") -> bytes:
    return struct.pack("<HB", app_id, op) + args


def split_command(payload: bytes) -> tuple[int, bytes]:
    """(app id, remainder); short payloads map to the null app."""
    if len(payload) < 2:
        return NULL_APP_ID, payload
    return struct.unpack_from("<H", payload)[0], payload[2:]


# -- door locks ----------------------------------------------------------------------


class DoorOp(enum.IntEnum):
    LOCK = 1
    UNLOCK = 2
    QUERY = 3


class DoorState(str, enum.Enum):
    LOCKED = "Locked"
    UNLOCKED = "Unlocked"


class DoorLock:
    """Four doors, numbered 1-4, all locked initially."""

    app_id = DOOR_LOCK_APP_ID
    DOORS = (1, 2, 3, 4)

    def __init__(self):
        self.doors = {d: DoorState.LOCKED for d in self.DOORS}

    @staticmethod
    def lock(door: int) -> bytes:
        return command(DOOR_LOCK_APP_ID, DoorOp.LOCK, bytes([door & 0xFF]))

    @staticmethod
    def unlock(door: int) -> bytes:
        return command(DOOR_LOCK_APP_ID, DoorOp.UNLOCK, bytes([door & 0xFF]))

    @staticmethod
    def query(door: int) -> bytes:
        return command(DOOR_LOCK_APP_ID, DoorOp.QUERY, bytes([door & 0xFF]))

    def apply(self, body: bytes) -> bytes:
        if len(body) != 2:
            return ERR
        op, door = body[0], body[1]
        if door not in self.doors:
            return ERR
        if op == DoorOp.LOCK:
            self.doors[door] = DoorState.LOCKED
            return OK
        if op == DoorOp.UNLOCK:
            self.doors[door] = DoorState.UNLOCKED
            return OK
        if op == DoorOp.QUERY:
            return self.doors[door].value.encode()
        return ERR

    def snapshot(self) -> bytes:
        return digest(b"".join(bytes([d, self.doors[d] is DoorState.LOCKED]) for d in self.DOORS))


# -- OTA firmware validation ----------------------------------------------------------


class OtaOp(enum.IntEnum):
    APPROVE = 1
    CHECK = 2


class OtaValidator:
    """Set of approved firmware digests."""

    app_id = OTA_APP_ID
    ACCEPT = b"ACCEPT"
    REJECT = b"REJECT"

    def __init__(self):
        self.approved: set[bytes] = set()

    @staticmethod
    def approve(firmware_digest: bytes) -> bytes:
        return command(OTA_APP_ID, OtaOp.APPROVE, firmware_digest)

    @staticmethod
    def check(firmware_digest: bytes) -> bytes:
        return command(OTA_APP_ID, OtaOp.CHECK, firmware_digest)

    def apply(self, body: bytes) -> bytes:
        if len(body) != 33:
            return ERR
        op, fw = body[0], body[1:]
        if op == OtaOp.APPROVE:
            self.approved.add(fw)
            return OK
        if op == OtaOp.CHECK:
            return self.ACCEPT if fw in self.approved else self.REJECT
        return ERR

    def snapshot(self) -> bytes:
        return digest(b"".join(sorted(self.approved)))


# -- registry ------------------------------------------------------------------------------


class AppRegistry:
    """Routes committed commands to registered apps by app id."""

    def __init__(self):
        self.apps: dict[int, StateMachine] = {}
        self.audit: list[str] = []

    def register(self, app: StateMachine) -> int:
        if app.app_id == NULL_APP_ID:
            raise RegistrationError("app id 0 is reserved")
        if app.app_id in self.apps:
            raise RegistrationError(f"app id {app.app_id} already registered")
        self.apps[app.app_id] = app
        return app.app_id

    def execute(self, payload: bytes) -> bytes:
        app_id, body = split_command(payload)
        if app_id == NULL_APP_ID:
            return b""
        app = self.apps.get(app_id)
        if app is None:
            self.audit.append(f"no app registered for id {app_id}; command committed as no-op")
            return b""
        return app.apply(body)

    def snapshot(self) -> bytes:
        parts = [struct.pack("<H", aid) + self.apps[aid].snapshot() for aid in sorted(self.apps)]
        return digest(b"".join(parts))
