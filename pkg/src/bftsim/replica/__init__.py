from .events import (
    BROADCAST,
    AckClient,
    CancelTimer,
    ClientSubmission,
    ConfirmPrefix,
    Deliver,
    InputEvent,
    OutputAction,
    Send,
    SetTimer,
    Tick,
    TimerFired,
)
from .machine import Mode, ReplicaMachine, assign_replica

__all__ = [
    "BROADCAST",
    "AckClient",
    "CancelTimer",
    "ClientSubmission",
    "ConfirmPrefix",
    "Deliver",
    "InputEvent",
    "Mode",
    "OutputAction",
    "ReplicaMachine",
    "Send",
    "SetTimer",
    "Tick",
    "TimerFired",
    "assign_replica",
]
