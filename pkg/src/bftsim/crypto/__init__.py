from .erasure import InconsistentChunks, InsufficientChunks, chunk_length, ec_decode, ec_encode
from .hashing import digest
from .merkle import merkle_build, merkle_verify
from .threshold import (
    AggregateProof,
    InsufficientShares,
    MixedDigests,
    MockThresholdProvider,
    VoteShare,
    make_provider,
)

__all__ = [
    "AggregateProof",
    "InconsistentChunks",
    "InsufficientChunks",
    "InsufficientShares",
    "MixedDigests",
    "MockThresholdProvider",
    "VoteShare",
    "chunk_length",
    "digest",
    "ec_decode",
    "ec_encode",
    "make_provider",
    "merkle_build",
    "merkle_verify",
]
