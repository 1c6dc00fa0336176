"""(2f+1, n)-threshold signatures behind a provider interface.

The default provider is a deterministic keyed-MAC mock: shares and
combined proofs are HMAC-SHA384 values (exactly 48 bytes), so byte
accounting matches a pairing-based scheme without the pairing math.
The mock is not unforgeable against a key holder; the simulator's
adversaries never forge, which is the threat model exercised here.
A real scheme can be dropped in behind the same interface.

The provider also issues ordinary (non-threshold) per-replica
signatures, used by the leader-change messages.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

from ..core.types import BadParams, validate_n_f

SHARE_SIZE = 48  # HMAC-SHA384 output


class InsufficientShares(Exception):
    pass


class MixedDigests(Exception):
    pass


@dataclass(frozen=True)
class VoteShare:
    signer: int
    message_digest: bytes
    share: bytes


@dataclass(frozen=True)
class AggregateProof:
    message_digest: bytes
    proof: bytes


def _mac(key: bytes, data: bytes) -> bytes:
    return hmac.new(key, data, hashlib.sha384).digest()


class MockThresholdProvider:
    """Deterministic threshold-signature scheme for simulation.

    keygen is implicit: all key material derives from (n, f, seed), so
    two providers built from the same inputs are byte-compatible.
    """

    name = "mock"

    def __init__(self, n: int, f: int, seed: int):
        validate_n_f(n, f)
        self.n = n
        self.f = f
        self.threshold = 2 * f + 1
        root = hashlib.sha256(b"ts-keyset" + seed.to_bytes(8, "big", signed=False)).digest()
        self._tsk = [_mac(root, b"tsk" + i.to_bytes(2, "big")) for i in range(n)]
        self._sig_key = [_mac(root, b"sig" + i.to_bytes(2, "big")) for i in range(n)]
        self._mpk = _mac(root, b"mpk")

    # threshold shares -----------------------------------------------------

    def sign(self, signer: int, message_digest: bytes) -> bytes:
        return _mac(self._tsk[signer], message_digest)

    def verify_share(self, signer: int, share: bytes, message_digest: bytes) -> bool:
        if not 0 <= signer < self.n or len(share) != SHARE_SIZE:
            return False
        return hmac.compare_digest(share, _mac(self._tsk[signer], message_digest))

    def combine(self, shares: list[VoteShare]) -> AggregateProof:
        """Combine >= 2f+1 valid shares from distinct signers on one digest."""
        if not shares:
            raise InsufficientShares("no shares")
        target = shares[0].message_digest
        if any(s.message_digest != target for s in shares):
            raise MixedDigests("shares cover different digests")
        valid_signers = {s.signer for s in shares if self.verify_share(s.signer, s.share, target)}
        if len(valid_signers) < self.threshold:
            raise InsufficientShares(
                f"{len(valid_signers)} valid distinct signers, need {self.threshold}"
            )
        return AggregateProof(target, _mac(self._mpk, target))

    def verify_proof(self, proof: bytes, message_digest: bytes) -> bool:
        if len(proof) != SHARE_SIZE:
            return False
        return hmac.compare_digest(proof, _mac(self._mpk, message_digest))

    # ordinary per-replica signatures --------------------------------------

    def sign_single(self, signer: int, message_digest: bytes) -> bytes:
        return _mac(self._sig_key[signer], message_digest)

    def verify_single(self, signer: int, signature: bytes, message_digest: bytes) -> bool:
        if not 0 <= signer < self.n or len(signature) != SHARE_SIZE:
            return False
        return hmac.compare_digest(signature, _mac(self._sig_key[signer], message_digest))


def make_provider(kind: str, n: int, f: int, seed: int) -> MockThresholdProvider:
    if kind == "mock":
        return MockThresholdProvider(n, f, seed)
    raise BadParams(f"unknown signature provider {kind!r} (available: mock)")
