from .log import ConflictingEntry, Log, UnresolvedDatablock, log_append, ordered_requests
from .types import (
    BadParams,
    BFTblock,
    BlockState,
    Checkpoint,
    Datablock,
    ProtocolParams,
    Request,
    RequestId,
)

__all__ = [
    "BadParams",
    "BFTblock",
    "BlockState",
    "Checkpoint",
    "ConflictingEntry",
    "Datablock",
    "Log",
    "ProtocolParams",
    "Request",
    "RequestId",
    "UnresolvedDatablock",
    "log_append",
    "ordered_requests",
]
