"""Byzantine strategies applied at the send/receive hooks of faulty replicas.

Each faulty replica wraps an ordinary machine: it follows the protocol
except for its specific deviation, which is the strongest adversary the
signature model permits (no forgeries).  Honest replicas run unwrapped.
"""

from __future__ import annotations

import random

from ..core.messages import DatablockMsg, Message, Proposal, Ready, block_bytes, datablock_bytes
from ..core.types import BFTblock, Datablock, Request, RequestId
from ..crypto.hashing import digest
from ..replica.machine import ReplicaMachine
from .scenario import FaultSpec

FLOOD_CLIENT_BASE = 60_000  # client-id space for junk requests
FLOOD_COUNTER_BASE = 1 << 40  # keeps flood counters off the machine's own sequence


class Adversary:
    """Default hooks: behave honestly."""

    needs_pulse = False

    def __init__(self, spec: FaultSpec, machine: ReplicaMachine, rng: random.Random):
        self.spec = spec
        self.machine = machine
        self.rng = rng
        self.at_us = spec.at_ms * 1000

    def outgoing(self, destinations: list[int], msg: Message, now: int) -> list[tuple[int, Message]]:
        return [(dst, msg) for dst in destinations]

    def accepts(self, msg: Message, now: int) -> bool:
        return True

    def alive(self, now: int) -> bool:
        return True

    def pulse(self, now: int) -> list[tuple[int, Message]]:
        return []


class CrashAdversary(Adversary):
    def outgoing(self, destinations, msg, now):
        if now >= self.at_us:
            return []
        return super().outgoing(destinations, msg, now)

    def accepts(self, msg, now):
        return now < self.at_us

    def alive(self, now):
        return now < self.at_us


class SilentLeaderAdversary(Adversary):
    """Stops sending from the activation time; keeps receiving, so it
    silently absorbs traffic instead of failing detectably."""

    def outgoing(self, destinations, msg, now):
        if now >= self.at_us:
            return []
        return super().outgoing(destinations, msg, now)


class SelectiveAdversary(Adversary):
    """Disseminates its own datablocks to a chosen subset only (always
    including the current leader, so they get linked), and drops every
    other generator's datablocks to starve retrieval helpers."""

    def outgoing(self, destinations, msg, now):
        if isinstance(msg, DatablockMsg):
            leader = self.machine.leader
            keep = [d for d in destinations if d == leader]
            rest = [d for d in destinations if d != leader]
            budget = max(self.spec.subset - 1, 0)
            keep.extend(rest[:budget])
            return [(dst, msg) for dst in sorted(keep)]
        return super().outgoing(destinations, msg, now)

    def accepts(self, msg, now):
        return not isinstance(msg, DatablockMsg)


class EquivocateAdversary(Adversary):
    """As leader, sends conflicting proposals to two halves of the
    replicas.  Neither half can reach quorum alone, so the slot stalls
    and the cluster has to vote the leader out."""

    def outgoing(self, destinations, msg, now):
        if (
            isinstance(msg, Proposal)
            and self.machine.is_leader()
            and not msg.block.dummy
            and len(msg.block.content) >= 1
        ):
            twin_content = tuple(reversed(msg.block.content))
            if twin_content == msg.block.content:
                twin_content = msg.block.content[:-1]
            twin_block = BFTblock(msg.block.view, msg.block.serial, twin_content, False)
            twin_share = self.machine.crypto.sign(self.machine.id, digest(block_bytes(twin_block)))
            twin = Proposal(twin_block, twin_share)
            ordered = sorted(destinations)
            half = len(ordered) // 2
            out = [(dst, msg) for dst in ordered[:half]]
            out.extend((dst, twin) for dst in ordered[half:])
            return out
        return super().outgoing(destinations, msg, now)


class FloodAdversary(Adversary):
    """Emits extra datablocks full of junk requests at every pulse; a
    configured per-generator rate limit is the countermeasure."""

    needs_pulse = True

    def __init__(self, spec, machine, rng):
        super().__init__(spec, machine, rng)
        self.counter = FLOOD_COUNTER_BASE
        self.seq = 0

    def pulse(self, now):
        params = self.machine.params
        out = []
        everyone = [i for i in range(params.n) if i != self.machine.id]
        for _ in range(self.spec.multiplier):
            requests = []
            for _ in range(params.datablock_batch):
                rid = RequestId(FLOOD_CLIENT_BASE + self.machine.id, self.seq)
                self.seq += 1
                requests.append(Request(rid, b"\x00" * params.payload))
            db = Datablock(self.machine.id, self.counter, tuple(requests))
            self.counter += 1
            msg = DatablockMsg(db)
            out.extend((dst, msg) for dst in everyone)
        return out


class FakeReadyAdversary(Adversary):
    """Withholds its own datablocks entirely but still attests readiness
    for them (and for fabricated digests), trying to trick the leader
    into linking data nobody can fetch."""

    def outgoing(self, destinations, msg, now):
        if isinstance(msg, DatablockMsg):
            dg = digest(datablock_bytes(msg.datablock))
            fake = digest(b"fake" + dg)
            leader = self.machine.leader
            return [(leader, Ready(dg, self.machine.id)), (leader, Ready(fake, self.machine.id))]
        return super().outgoing(destinations, msg, now)


def make_adversary(spec: FaultSpec, machine: ReplicaMachine, rng: random.Random) -> Adversary | None:
    kinds = {
        "honest": None,
        "crash": CrashAdversary,
        "silent_leader": SilentLeaderAdversary,
        "selective": SelectiveAdversary,
        "equivocate": EquivocateAdversary,
        "flood": FloodAdversary,
        "fake_ready": FakeReadyAdversary,
    }
    cls = kinds[spec.strategy]
    if cls is None:
        return None
    return cls(spec, machine, rng)
