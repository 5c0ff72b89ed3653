"""In-vehicle replicated services: applications and the client proxy."""

from .apps import (
    DOOR_LOCK_APP_ID,
    ERR,
    NULL_APP_ID,
    OK,
    OTA_APP_ID,
    AppRegistry,
    DoorLock,
    DoorOp,
    DoorState,
    OtaOp,
    OtaValidator,
    RegistrationError,
    StateMachine,
    command,
    split_command,
)
from .proxy import ACCEPTED, DIVERGENT, UNAVAILABLE, LoadSpec, Outcome, Proxy, ProxyError, ReplyDivergence, Unavailable

__all__ = [
    "ACCEPTED",
    "AppRegistry",
    "DIVERGENT",
    "DOOR_LOCK_APP_ID",
    "DoorLock",
    "DoorOp",
    "DoorState",
    "ERR",
    "LoadSpec",
    "NULL_APP_ID",
    "OK",
    "OTA_APP_ID",
    "Outcome",
    "OtaOp",
    "OtaValidator",
    "Proxy",
    "ProxyError",
    "RegistrationError",
    "ReplyDivergence",
    "StateMachine",
    "UNAVAILABLE",
    "Unavailable",
    "command",
    "split_command",
]
