"""Inputs and outputs of the replica state machine.

A replica consumes one InputEvent at a time and returns a list of
OutputActions; it never talks to a network or a clock directly, which
keeps runs deterministic and lets the same machine drive the simulator
and the socket runner.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core.messages import Message
from ..core.types import Request, RequestId

BROADCAST = -1  # destination: every replica except self


@dataclass(frozen=True)
class Deliver:
    sender: int  # replica id, or -(client id)-1 for client origins
    message: Message


@dataclass(frozen=True)
class TimerFired:
    timer_id: tuple


@dataclass(frozen=True)
class ClientSubmission:
    request: Request


@dataclass(frozen=True)
class Tick:
    pass


InputEvent = Deliver | TimerFired | ClientSubmission | Tick


@dataclass(frozen=True)
class Send:
    to: int  # replica id or BROADCAST
    message: Message


@dataclass(frozen=True)
class SetTimer:
    timer_id: tuple
    duration_us: int


@dataclass(frozen=True)
class CancelTimer:
    timer_id: tuple


@dataclass(frozen=True)
class ConfirmPrefix:
    upto: int


@dataclass(frozen=True)
class AckClient:
    request_id: RequestId


OutputAction = Send | SetTimer | CancelTimer | ConfirmPrefix | AckClient
