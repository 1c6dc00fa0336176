"""Merkle trees with domain-separated leaf/interior hashing.

Leaves hash under prefix 0x00 and interior nodes under 0x01, so a
leaf value can never verify as an interior node.  Odd levels are
padded by duplicating the last node.  Proof entries are
(sibling digest, side) with side 0 = sibling on the left.
"""

from __future__ import annotations

import hashlib

SIDE_LEFT = 0
SIDE_RIGHT = 1


def _leaf_hash(leaf: bytes) -> bytes:
    return hashlib.sha256(b"\x00" + leaf).digest()


def _node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(b"\x01" + left + right).digest()


def merkle_build(leaves: list[bytes]) -> tuple[bytes, list[tuple[tuple[bytes, int], ...]]]:
    """Build the tree; returns (root, inclusion proof per leaf)."""
    if not leaves:
        raise ValueError("merkle tree needs at least one leaf")
    level = [_leaf_hash(leaf) for leaf in leaves]
    paths: list[list[tuple[bytes, int]]] = [[] for _ in leaves]
    positions = list(range(len(leaves)))
    while len(level) > 1:
        if len(level) % 2 == 1:
            level.append(level[-1])
        for i, pos in enumerate(positions):
            if pos % 2 == 0:
                paths[i].append((level[pos + 1], SIDE_RIGHT))
            else:
                paths[i].append((level[pos - 1], SIDE_LEFT))
        level = [_node_hash(level[j], level[j + 1]) for j in range(0, len(level), 2)]
        positions = [pos // 2 for pos in positions]
    return level[0], [tuple(p) for p in paths]


def merkle_verify(root: bytes, leaf: bytes, index: int, proof: tuple[tuple[bytes, int], ...]) -> bool:
    """Check that leaf sits at index under root via the given path."""
    if index < 0:
        return False
    node = _leaf_hash(leaf)
    pos = index
    for sibling, side in proof:
        # the path's sides must agree with the index bits
        expected = SIDE_LEFT if pos % 2 == 1 else SIDE_RIGHT
        if side != expected:
            return False
        if side == SIDE_LEFT:
            node = _node_hash(sibling, node)
        else:
            node = _node_hash(node, sibling)
        pos //= 2
    if pos != 0:
        return False
    return node == root
