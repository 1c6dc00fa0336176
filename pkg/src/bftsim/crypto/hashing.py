"""Collision-resistant hashing (SHA-256, 32-byte digests)."""

from __future__ import annotations

import hashlib

DIGEST_SIZE = 32


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()
