"""Confirmed-block log and deterministic request ordering."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .types import BFTblock, Datablock, Request


class ConflictingEntry(Exception):
    """A different block already occupies this serial: safety violation, abort the run."""


class UnresolvedDatablock(Exception):
    """A confirmed block references a datablock absent from the pool."""


def same_content(a: BFTblock, b: BFTblock) -> bool:
    """Entry identity ignores the view stamp: a block re-agreed after a
    leader change keeps its serial and content but carries the new view."""
    return a.serial == b.serial and a.content == b.content and a.dummy == b.dummy


@dataclass
class Log:
    entries: dict[int, tuple[BFTblock, bytes]] = field(default_factory=dict)
    executed_upto: int = 0

    def append(self, block: BFTblock, proof: bytes) -> None:
        """Insert a confirmed block at its serial and extend the consecutive prefix.

        Re-confirmation of the same content (from a later view) replaces
        the entry so logs converge byte-for-byte; different content at an
        occupied serial is a safety violation.
        """
        existing = self.entries.get(block.serial)
        if existing is not None:
            if not same_content(existing[0], block):
                raise ConflictingEntry(
                    f"serial {block.serial}: conflicting confirmed blocks "
                    f"(views {existing[0].view} and {block.view})"
                )
            if block.view > existing[0].view:
                self.entries[block.serial] = (block, proof)
            return
        self.entries[block.serial] = (block, proof)
        while (self.executed_upto + 1) in self.entries:
            self.executed_upto += 1

    def prefix_length(self) -> int:
        return self.executed_upto

    def block_at(self, serial: int) -> BFTblock | None:
        entry = self.entries.get(serial)
        return entry[0] if entry else None


def log_append(log: Log, block: BFTblock, proof: bytes) -> Log:
    log.append(block, proof)
    return log


def ordered_requests(
    log: Log,
    upto: int,
    resolve: Callable[[bytes], Datablock | None],
) -> list[Request]:
    """Requests of serials 1..upto in execution order.

    Blocks are visited in serial order; within one block the linked
    datablocks' requests are flattened and sorted by the lexicographic
    order of their canonical id bytes.  Dummy blocks contribute nothing.
    """
    if upto > log.executed_upto:
        raise ValueError(f"serial {upto} beyond executed prefix {log.executed_upto}")
    out: list[Request] = []
    for serial in range(1, upto + 1):
        block, _ = log.entries[serial]
        if block.dummy:
            continue
        batch: list[Request] = []
        for digest in block.content:
            db = resolve(digest)
            if db is None:
                raise UnresolvedDatablock(f"serial {serial}: datablock {digest.hex()[:16]} missing")
            batch.extend(db.requests)
        batch.sort(key=lambda q: q.id.to_bytes())
        out.extend(batch)
    return out
