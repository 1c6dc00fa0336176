"""Online safety monitor, evaluated after every simulation event.

Detects, among honest replicas only:
  - conflicting confirmed blocks at one serial (content compared, since
    a re-agreed block legitimately carries a newer view stamp),
  - a second first-round vote by one replica at one (view, serial),
  - two different blocks notarized at one (view, serial),
  - a confirmation accepted without a valid aggregate proof.

The monitor is pure bookkeeping over observed sends and confirmations,
so synthetic traces can be replayed through it directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..core import messages as wire
from ..core.messages import Message, Notarization, PrepareShare, Proposal, block_bytes
from ..crypto.hashing import digest
from ..crypto.threshold import MockThresholdProvider


@dataclass
class Violation:
    kind: str
    detail: str
    time_us: int

    def __str__(self) -> str:
        return f"[{self.time_us}us] {self.kind}: {self.detail}"


@dataclass
class SafetyMonitor:
    provider: MockThresholdProvider
    honest: frozenset[int]
    proposal_slot: dict[bytes, tuple[int, int]] = field(default_factory=dict)
    first_votes: dict[tuple[int, int, int], bytes] = field(default_factory=dict)
    notarized_at: dict[tuple[int, int], bytes] = field(default_factory=dict)
    confirmed_at: dict[int, tuple] = field(default_factory=dict)
    violations: list[Violation] = field(default_factory=list)

    def ok(self) -> bool:
        return not self.violations

    def _flag(self, kind: str, detail: str, now: int) -> None:
        self.violations.append(Violation(kind, detail, now))

    # -- observed traffic ---------------------------------------------------

    def on_send(self, sender: int, msg: Message, now: int) -> None:
        if isinstance(msg, Proposal):
            bd = digest(block_bytes(msg.block))
            self.proposal_slot.setdefault(bd, (msg.block.view, msg.block.serial))
        elif isinstance(msg, PrepareShare):
            if msg.signer not in self.honest:
                return
            slot = self.proposal_slot.get(msg.block_digest)
            if slot is None:
                return
            key = (msg.signer, slot[0], slot[1])
            prior = self.first_votes.get(key)
            if prior is None:
                self.first_votes[key] = msg.block_digest
            elif prior != msg.block_digest:
                self._flag(
                    "double-vote",
                    f"replica {msg.signer} cast two first-round votes at view {slot[0]} serial {slot[1]}",
                    now,
                )
        elif isinstance(msg, Notarization):
            if not self.provider.verify_proof(msg.proof, msg.block_digest):
                return
            slot = self.proposal_slot.get(msg.block_digest)
            if slot is None:
                return
            prior = self.notarized_at.get(slot)
            if prior is None:
                self.notarized_at[slot] = msg.block_digest
            elif prior != msg.block_digest:
                self._flag(
                    "double-notarization",
                    f"two different blocks notarized at view {slot[0]} serial {slot[1]}",
                    now,
                )

    # -- observed confirmations ----------------------------------------------

    def on_confirmation(
        self,
        replica: int,
        serial: int,
        content: tuple[bytes, ...],
        dummy: bool,
        notarization: bytes | None,
        proof: bytes,
        now: int,
    ) -> None:
        if replica not in self.honest:
            return
        if notarization is None or not self.provider.verify_proof(
            proof, digest(wire.DOM_NOTARIZATION + notarization)
        ):
            self._flag(
                "unproven-confirmation",
                f"replica {replica} confirmed serial {serial} without a valid proof",
                now,
            )
            return
        key = (content, dummy)
        prior = self.confirmed_at.get(serial)
        if prior is None:
            self.confirmed_at[serial] = key
        elif prior != key:
            self._flag(
                "conflicting-confirmation",
                f"serial {serial} confirmed with different content at honest replicas",
                now,
            )


def monitor_safety(monitor: SafetyMonitor) -> str | Violation:
    """Verdict over the trace observed so far."""
    return monitor.violations[0] if monitor.violations else "ok"
