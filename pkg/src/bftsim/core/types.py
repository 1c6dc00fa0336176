"""Domain types shared by every layer of the protocol.

All values are immutable; replica state machines and the simulator hold
them by reference and never mutate them.  Times are integer microseconds
of simulated time throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

DIGEST_SIZE = 32  # bytes per hash output
SHARE_SIZE = 48  # bytes per vote share / combined proof


class BadParams(ValueError):
    """Raised when protocol parameters violate a structural invariant."""


@dataclass(frozen=True)
class RequestId:
    """Unique request identifier: (client id, client sequence number)."""

    client: int
    seq: int

    def to_bytes(self) -> bytes:
        return self.client.to_bytes(4, "big") + self.seq.to_bytes(4, "big")


@dataclass(frozen=True)
class Request:
    id: RequestId
    payload: bytes
    timeout_tag: bool = False


@dataclass(frozen=True)
class Datablock:
    """Batch of client requests disseminated by a non-leader replica.

    Identified by (generator, counter); one counter value is accepted
    per generator, so a duplicate counter with different content is
    silently dropped by receivers.
    """

    generator: int
    counter: int
    requests: tuple[Request, ...]


@dataclass(frozen=True)
class BFTblock:
    """Consensus proposal: an ordered list of datablock hashes.

    Keyed by (view, serial).  Dummy blocks have empty content and are
    used to fill serial gaps after a leader change.
    """

    view: int
    serial: int
    content: tuple[bytes, ...]
    dummy: bool = False


class BlockState(Enum):
    PROPOSED = 1
    NOTARIZED = 2
    CONFIRMED = 3


@dataclass(frozen=True)
class Checkpoint:
    """Stable point of the log: serial number plus execution-state hash."""

    serial: int
    state_hash: bytes


def validate_n_f(n: int, f: int) -> None:
    if f < 1 or n != 3 * f + 1:
        raise BadParams(f"replica count must satisfy n = 3f+1 with f >= 1 (got n={n}, f={f})")


@dataclass(frozen=True)
class ProtocolParams:
    """Static configuration shared by all replicas of one deployment."""

    n: int
    f: int
    window: int = 100  # max parallel agreement instances (watermark span)
    block_batch: int = 100  # datablock hashes per proposal
    datablock_batch: int = 2000  # requests per datablock
    payload: int = 128  # bytes per request payload
    digest_size: int = DIGEST_SIZE
    share_size: int = SHARE_SIZE
    delta_us: int = 100_000  # post-GST delivery bound
    flush_us: int = 50_000  # partial-datablock / partial-proposal flush interval
    retrieval_timer_us: int = 200_000  # missing-datablock query delay (2 * delta)
    viewchange_timer_us: int = 1_000_000  # leader-progress timeout (10 * delta)
    client_retry_us: int = 2_000_000  # client resubmission delay (20 * delta)
    rate_limit_per_sec: int | None = None  # max datablocks accepted per generator per second

    def __post_init__(self) -> None:
        validate_n_f(self.n, self.f)
        if self.window < 2 or self.window % 2 != 0:
            raise BadParams(f"window must be even and >= 2 (got {self.window})")
        for name in ("block_batch", "datablock_batch", "payload", "digest_size", "share_size"):
            if getattr(self, name) <= 0:
                raise BadParams(f"{name} must be positive")

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1

    @property
    def checkpoint_period(self) -> int:
        return self.window // 2

    def leader_of(self, view: int) -> int:
        return view % self.n

    @property
    def datablock_bytes(self) -> int:
        """Nominal datablock size (request payload only), the cost model's per-datablock bits."""
        return self.datablock_batch * self.payload
