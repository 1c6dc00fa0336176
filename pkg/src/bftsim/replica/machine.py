"""The replica as a deterministic event-driven state machine.

One input event (delivered message, timer, client submission) produces
a list of output actions (sends, timer ops, confirmations, acks).  The
machine owns no clock and no randomness: identical event sequences
yield identical action sequences, which the simulator's replay checks
rely on.

Protocol outline: non-leaders batch client requests into datablocks
and multicast them (data plane); the leader links datablock hashes
into proposals once 2f+1 replicas attested receipt, then drives two
vote rounds (notarize, confirm) whose threshold shares it combines and
rebroadcasts.  Missing data is recovered from f+1 erasure-coded,
Merkle-authenticated chunks.  A leader that stops making progress is
replaced through signed timeouts, view-change messages carrying
notarized blocks, and re-proposal in the next view.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..core import messages as wire
from ..core.log import Log
from ..core.messages import (
    CheckpointProof,
    CheckpointShare,
    ClientRequestMsg,
    CommitShare,
    Confirmation,
    DatablockMsg,
    NewView,
    Notarization,
    PrepareShare,
    Proposal,
    Query,
    Ready,
    Resp,
    Timeout,
    ViewChange,
    block_bytes,
    checkpoint_bytes,
    datablock_bytes,
    decode_block_bytes,
    decode_datablock_bytes,
    timeout_bytes,
)
from ..core.types import BFTblock, BlockState, Checkpoint, Datablock, ProtocolParams, Request, RequestId
from ..crypto.erasure import InconsistentChunks, InsufficientChunks, ec_decode, ec_encode
from ..crypto.hashing import digest
from ..crypto.merkle import merkle_build, merkle_verify
from ..crypto.threshold import MockThresholdProvider, VoteShare
from .events import (
    BROADCAST,
    AckClient,
    CancelTimer,
    ClientSubmission,
    ConfirmPrefix,
    Deliver,
    InputEvent,
    OutputAction,
    Send,
    SetTimer,
    TimerFired,
    Tick,
)

ZERO_HASH = b"\x00" * 32

TIMER_FLUSH = ("flush",)
TIMER_PROPOSE = ("propose_flush",)
TIMER_RETRIEVAL = ("retrieval",)


def assign_replica(request_id: RequestId, n: int, view: int) -> int:
    """Deterministic request-to-replica assignment, never the current leader."""
    leader = view % n
    slot = int.from_bytes(digest(request_id.to_bytes())[:8], "big") % (n - 1)
    candidates = [i for i in range(n) if i != leader]
    return candidates[slot]


class Mode(Enum):
    NORMAL = 1
    VIEW_CHANGING = 2


@dataclass
class BlockRecord:
    block: BFTblock
    leader_share: bytes | None = None
    state: BlockState = BlockState.PROPOSED
    notarization: bytes | None = None
    confirmation: bytes | None = None
    second_sent: bool = False
    first_shares: dict[int, bytes] = field(default_factory=dict)
    second_shares: dict[int, bytes] = field(default_factory=dict)


@dataclass
class _PendingBlock:
    digest: bytes
    missing: set[bytes]


class ReplicaMachine:
    """Single replica instance; strictly single-threaded, one event at a time."""

    def __init__(
        self,
        replica_id: int,
        params: ProtocolParams,
        provider: MockThresholdProvider,
        _break_vote_once: bool = False,
    ):
        self.id = replica_id
        self.params = params
        self.crypto = provider
        self.now = 0
        # fault-injection hook for monitor self-tests only
        self._break_vote_once = _break_vote_once

        self.view = 1
        self.mode = Mode.NORMAL
        self.vc_target: int | None = None

        # data plane
        self.mempool: dict[RequestId, Request] = {}
        self.seen_request_ids: set[RequestId] = set()
        self.next_counter = 1
        self.datablock_pool: dict[bytes, Datablock] = {}
        self.seen_counters: set[tuple[int, int]] = set()
        self.rate_window: dict[int, tuple[int, int]] = {}  # generator -> (second, accepted)
        self.flush_armed = False
        self.last_mempool_add = 0
        self.oldest_pending = 0

        # leader bookkeeping
        self.ready_senders: dict[bytes, set[int]] = {}
        self.linkable: list[bytes] = []
        self.linked: set[bytes] = set()
        self.next_serial = 1
        self.open_serials: set[int] = set()
        self.propose_flush_armed = False
        self.last_linkable_add = 0
        self.oldest_linkable = 0
        self.notar_owner: dict[bytes, bytes] = {}  # notarization digest -> block digest
        self.checkpoint_shares: dict[bytes, dict[int, bytes]] = {}
        self.combined_checkpoints: set[bytes] = set()

        # agreement state
        self.records: dict[bytes, BlockRecord] = {}
        self.proposal_at: dict[tuple[int, int], bytes] = {}
        self.voted: dict[tuple[int, int], bytes] = {}
        self.pending_blocks: dict[bytes, _PendingBlock] = {}
        self.future_proposals: dict[int, list[Proposal]] = {}
        self.cached_notarizations: dict[bytes, bytes] = {}
        self.cached_confirmations: dict[bytes, bytes] = {}
        self.notar_index: dict[bytes, bytes] = {}  # notarization digest -> block digest

        # retrieval
        self.missing: set[bytes] = set()
        self.retrieval_armed = False
        self.chunks_by_root: dict[bytes, dict[int, bytes]] = {}
        self.dead_roots: set[bytes] = set()
        self.answered_queries: set[tuple[bytes, int]] = set()
        self.encoding_cache: dict[bytes, tuple[list[bytes], bytes, list]] = {}

        # log and execution
        self.log = Log()
        self.applied_upto = 0
        self.exec_chain = ZERO_HASH
        self.boundary_hashes: dict[int, bytes] = {}
        self.executed_ids: set[RequestId] = set()
        self.linked_digests: set[bytes] = set()  # datablock digests of confirmed blocks
        self.lw = 0
        self.latest_checkpoint: tuple[Checkpoint, bytes] | None = None
        self.checkpointed_boundaries: set[int] = set()

        # journals drained by the driver (simulator / socket runner)
        self.confirm_journal: list[tuple[int, int, tuple[bytes, ...], bool, bytes | None, bytes]] = []
        self.exec_journal: list[tuple[int, int]] = []  # (serial, payload bytes executed)

        # leader-change state
        self.timeout_votes: dict[int, dict[int, bytes]] = {}
        self.abandoned: set[int] = set()
        self.vc_collections: dict[int, dict[int, ViewChange]] = {}
        self.new_view_sent: set[int] = set()
        self.tracked_timeouts: set[RequestId] = set()
        self.tagged_pending: set[RequestId] = set()

    # ------------------------------------------------------------------ api

    @property
    def leader(self) -> int:
        return self.params.leader_of(self.view)

    def is_leader(self) -> bool:
        return self.id == self.leader

    def handle(self, event: InputEvent, now: int) -> list[OutputAction]:
        self.now = now
        out: list[OutputAction] = []
        if isinstance(event, Deliver):
            self._dispatch(event.message, out)
        elif isinstance(event, ClientSubmission):
            self._on_client_request(event.request, out)
        elif isinstance(event, TimerFired):
            self._on_timer(event.timer_id, out)
        elif isinstance(event, Tick):
            pass
        return out

    def _dispatch(self, msg, out: list[OutputAction]) -> None:
        if isinstance(msg, ClientRequestMsg):
            for request in msg.requests:
                self._on_client_request(request, out)
        elif isinstance(msg, DatablockMsg):
            self._on_datablock(msg.datablock, out)
        elif isinstance(msg, Ready):
            self._on_ready(msg, out)
        elif isinstance(msg, Proposal):
            self._on_proposal(msg, out)
        elif isinstance(msg, PrepareShare):
            self._on_prepare_share(msg, out)
        elif isinstance(msg, Notarization):
            self._on_notarization(msg, out)
        elif isinstance(msg, CommitShare):
            self._on_commit_share(msg, out)
        elif isinstance(msg, Confirmation):
            self._on_confirmation(msg, out)
        elif isinstance(msg, Query):
            self._on_query(msg, out)
        elif isinstance(msg, Resp):
            self._on_resp(msg, out)
        elif isinstance(msg, CheckpointShare):
            self._on_checkpoint_share(msg, out)
        elif isinstance(msg, CheckpointProof):
            self._on_checkpoint_proof(msg, out)
        elif isinstance(msg, Timeout):
            self._on_timeout(msg, out)
        elif isinstance(msg, ViewChange):
            self._on_view_change(msg, out)
        elif isinstance(msg, NewView):
            self._on_new_view(msg, out)

    # ------------------------------------------------------- client requests

    def _on_client_request(self, request: Request, out: list[OutputAction]) -> None:
        rid = request.id
        if rid in self.executed_ids:
            return
        if rid in self.seen_request_ids:
            # a timeout-tagged resubmission upgrades the buffered copy and
            # starts the leader-progress bookkeeping
            if request.timeout_tag:
                if rid in self.mempool and not self.mempool[rid].timeout_tag:
                    self.mempool[rid] = request
                self._track_timeout_request(rid, out)
            return
        self.seen_request_ids.add(rid)
        if not self.mempool:
            self.oldest_pending = self.now
        self.mempool[rid] = request
        self.last_mempool_add = self.now
        if request.timeout_tag:
            self._track_timeout_request(rid, out)
        if not self.is_leader():
            self._emit_datablocks(out, partial=False)
            if self.mempool and not self.flush_armed:
                self.flush_armed = True
                out.append(SetTimer(TIMER_FLUSH, self.params.flush_us))

    def _track_timeout_request(self, rid: RequestId, out: list[OutputAction]) -> None:
        if rid in self.executed_ids:
            return
        self.tagged_pending.add(rid)
        if rid in self.tracked_timeouts:
            return
        self.tracked_timeouts.add(rid)
        out.append(SetTimer(("reqvc", rid.client, rid.seq), self.params.viewchange_timer_us))

    # ------------------------------------------------------------ datablocks

    def _emit_datablocks(self, out: list[OutputAction], partial: bool) -> None:
        if self.is_leader():
            return
        batch = self.params.datablock_batch
        while len(self.mempool) >= batch or (partial and self.mempool):
            take = min(batch, len(self.mempool))
            ids = list(self.mempool.keys())[:take]
            requests = tuple(self.mempool.pop(rid) for rid in ids)
            db = Datablock(self.id, self.next_counter, requests)
            self.next_counter += 1
            self._accept_datablock(db, out, from_self=True)
            out.append(Send(BROADCAST, DatablockMsg(db)))
            if take < batch:
                break

    def _rate_limited(self, generator: int) -> bool:
        limit = self.params.rate_limit_per_sec
        if limit is None:
            return False
        second = self.now // 1_000_000
        sec, count = self.rate_window.get(generator, (second, 0))
        if sec != second:
            sec, count = second, 0
        if count >= limit:
            self.rate_window[generator] = (sec, count)
            return True
        self.rate_window[generator] = (sec, count + 1)
        return False

    def _on_datablock(self, db: Datablock, out: list[OutputAction]) -> None:
        key = (db.generator, db.counter)
        if key in self.seen_counters:
            return  # duplicate counter from this generator: drop
        if self._rate_limited(db.generator):
            return
        self.seen_counters.add(key)
        self._accept_datablock(db, out, from_self=False)

    def _accept_datablock(self, db: Datablock, out: list[OutputAction], from_self: bool) -> None:
        dg = digest(datablock_bytes(db))
        if dg in self.datablock_pool:
            return
        self.datablock_pool[dg] = db
        for request in db.requests:
            self.seen_request_ids.add(request.id)
            if request.timeout_tag and request.id not in self.executed_ids:
                self._track_timeout_request(request.id, out)
        if not from_self and not self.is_leader():
            out.append(Send(self.leader, Ready(dg, self.id)))
        if self.is_leader():
            # the leader holds it; the generator trivially holds its own copy
            self._credit_ready(dg, self.id)
            self._credit_ready(dg, db.generator)
            self._promote_linkable(dg, out)
        self._resolve_missing(dg, out)

    # ------------------------------------------------------------- readiness

    def _credit_ready(self, dg: bytes, sender: int) -> None:
        self.ready_senders.setdefault(dg, set()).add(sender)

    def _on_ready(self, msg: Ready, out: list[OutputAction]) -> None:
        if not self.is_leader():
            return
        self._credit_ready(msg.digest, msg.sender)
        self._promote_linkable(msg.digest, out)

    def _promote_linkable(self, dg: bytes, out: list[OutputAction]) -> None:
        if dg in self.linked or dg in self.linked_digests or dg in self.linkable:
            return
        if dg not in self.datablock_pool:
            return
        if len(self.ready_senders.get(dg, ())) < self.params.quorum:
            return
        if not self.linkable:
            self.oldest_linkable = self.now
        self.linkable.append(dg)
        self.last_linkable_add = self.now
        self._try_propose(out, partial=False)
        if self.linkable and not self.propose_flush_armed:
            self.propose_flush_armed = True
            out.append(SetTimer(TIMER_PROPOSE, self.params.flush_us))

    # -------------------------------------------------------------- proposing

    def _window_open(self) -> bool:
        return (
            len(self.open_serials) < self.params.window
            and self.next_serial <= self.lw + self.params.window
        )

    def _try_propose(self, out: list[OutputAction], partial: bool) -> None:
        if not self.is_leader() or self.mode is not Mode.NORMAL:
            return
        batch = self.params.block_batch
        while self.linkable and self._window_open():
            if len(self.linkable) < batch and not partial:
                return
            take = self.linkable[:batch]
            del self.linkable[: len(take)]
            self.linked.update(take)
            block = BFTblock(self.view, self.next_serial, tuple(take))
            self.next_serial += 1
            self._propose_block(block, out)

    def _propose_block(self, block: BFTblock, out: list[OutputAction]) -> None:
        """Broadcast a proposal and record the leader's own first-round vote."""
        bd = digest(block_bytes(block))
        share = self.crypto.sign(self.id, bd)
        record = self.records.setdefault(bd, BlockRecord(block))
        record.leader_share = share
        record.first_shares[self.id] = share
        key = (block.view, block.serial)
        self.proposal_at.setdefault(key, bd)
        self.voted.setdefault(key, bd)
        self.open_serials.add(block.serial)
        out.append(Send(BROADCAST, Proposal(block, share)))
        if not block.dummy:
            for dg in sorted(d for d in block.content if d not in self.datablock_pool):
                self._register_missing(dg, out)

    # ------------------------------------------------------------- proposals

    def _on_proposal(self, msg: Proposal, out: list[OutputAction]) -> None:
        block = msg.block
        bd = digest(block_bytes(block))
        key = (block.view, block.serial)
        leader = self.params.leader_of(block.view)

        if not self.crypto.verify_share(leader, msg.leader_share, bd):
            return
        if block.view > self.view:
            self.future_proposals.setdefault(block.view, []).append(msg)
            return
        if block.view < self.view:
            return

        # two validly signed, different blocks at one slot: publicly
        # verifiable leader contradiction
        prior_bd = self.proposal_at.get(key)
        if prior_bd is not None and prior_bd != bd:
            if not self._break_vote_once:
                self._abandon_view(block.view, out)
                return

        if not (self.lw < block.serial <= self.lw + self.params.window):
            return
        if key in self.voted and not self._break_vote_once:
            return  # vote-once per (view, serial)

        record = self.records.setdefault(bd, BlockRecord(block))
        record.leader_share = msg.leader_share
        self.proposal_at.setdefault(key, bd)

        if not block.dummy:
            missing = {dg for dg in block.content if dg not in self.datablock_pool}
            if missing:
                self.pending_blocks[bd] = _PendingBlock(bd, missing)
                for dg in sorted(missing):
                    self._register_missing(dg, out)
                return
        self._cast_vote(record, out)

    def _cast_vote(self, record: BlockRecord, out: list[OutputAction]) -> None:
        if self.mode is not Mode.NORMAL:
            return
        block = record.block
        if block.view != self.view or record.leader_share is None:
            return
        key = (block.view, block.serial)
        if key in self.voted and not self._break_vote_once:
            return
        bd = digest(block_bytes(block))
        self.voted[key] = bd
        share = self.crypto.sign(self.id, bd)
        out.append(Send(self.leader, PrepareShare(self.id, bd, share)))
        # proofs may have arrived while the block content was still missing
        self._apply_cached_proofs(bd, out)

    # ------------------------------------------------------------ vote rounds

    def _on_prepare_share(self, msg: PrepareShare, out: list[OutputAction]) -> None:
        if not self.is_leader() or self.mode is not Mode.NORMAL:
            return
        record = self.records.get(msg.block_digest)
        if record is None or record.state is not BlockState.PROPOSED:
            return
        if not self.crypto.verify_share(msg.signer, msg.share, msg.block_digest):
            return
        record.first_shares[msg.signer] = msg.share
        if len(record.first_shares) >= self.params.quorum:
            shares = [
                VoteShare(signer, msg.block_digest, share)
                for signer, share in sorted(record.first_shares.items())
            ]
            proof = self.crypto.combine(shares[: self.params.quorum]).proof
            nd = digest(wire.DOM_NOTARIZATION + proof)
            self.notar_owner[nd] = msg.block_digest
            out.append(Send(BROADCAST, Notarization(msg.block_digest, proof)))
            self._apply_notarization(msg.block_digest, proof, out)

    def _on_notarization(self, msg: Notarization, out: list[OutputAction]) -> None:
        if not self.crypto.verify_proof(msg.proof, msg.block_digest):
            return
        if msg.block_digest not in self.records:
            self.cached_notarizations[msg.block_digest] = msg.proof
            self._register_missing(msg.block_digest, out)
            return
        self._apply_notarization(msg.block_digest, msg.proof, out)

    def _apply_notarization(self, bd: bytes, proof: bytes, out: list[OutputAction]) -> None:
        record = self.records[bd]
        nd = digest(wire.DOM_NOTARIZATION + proof)
        self.notar_index[nd] = bd
        if record.state is BlockState.PROPOSED:
            record.state = BlockState.NOTARIZED
            record.notarization = proof
        if not record.second_sent and self.mode is Mode.NORMAL and record.block.view == self.view:
            record.second_sent = True
            share = self.crypto.sign(self.id, nd)
            if self.is_leader():
                self._collect_commit_share(nd, self.id, share, out)
            else:
                out.append(Send(self.leader, CommitShare(self.id, nd, share)))
        cached = self.cached_confirmations.pop(nd, None)
        if cached is not None:
            self._apply_confirmation(nd, cached, out)

    def _on_commit_share(self, msg: CommitShare, out: list[OutputAction]) -> None:
        if not self.is_leader() or self.mode is not Mode.NORMAL:
            return
        if msg.notarization_digest not in self.notar_owner:
            return
        if not self.crypto.verify_share(msg.signer, msg.share, msg.notarization_digest):
            return
        self._collect_commit_share(msg.notarization_digest, msg.signer, msg.share, out)

    def _collect_commit_share(self, nd: bytes, signer: int, share: bytes, out: list[OutputAction]) -> None:
        bd = self.notar_owner.get(nd)
        if bd is None:
            return
        record = self.records[bd]
        if record.confirmation is not None:
            return
        record.second_shares[signer] = share
        if len(record.second_shares) >= self.params.quorum:
            shares = [VoteShare(s, nd, sh) for s, sh in sorted(record.second_shares.items())]
            proof = self.crypto.combine(shares[: self.params.quorum]).proof
            out.append(Send(BROADCAST, Confirmation(nd, proof)))
            self._apply_confirmation(nd, proof, out)

    def _on_confirmation(self, msg: Confirmation, out: list[OutputAction]) -> None:
        if not self.crypto.verify_proof(msg.proof, msg.notarization_digest):
            return
        if msg.notarization_digest not in self.notar_index:
            self.cached_confirmations[msg.notarization_digest] = msg.proof
            return
        self._apply_confirmation(msg.notarization_digest, msg.proof, out)

    def _apply_confirmation(self, nd: bytes, proof: bytes, out: list[OutputAction]) -> None:
        bd = self.notar_index[nd]
        record = self.records[bd]
        if record.state is BlockState.CONFIRMED:
            return
        record.state = BlockState.CONFIRMED
        record.confirmation = proof
        block = record.block
        self.log.append(block, proof)
        self.confirm_journal.append(
            (block.serial, block.view, block.content, block.dummy, record.notarization, proof)
        )
        self.linked_digests.update(block.content)
        self.open_serials.discard(block.serial)
        self._advance_execution(out)
        if self.is_leader():
            self._try_propose(out, partial=False)

    # --------------------------------------------------------------- execution

    def _block_requests(self, block: BFTblock) -> list[Request] | None:
        """Requests of one block in execution order, or None if data is missing."""
        if block.dummy:
            return []
        batch: list[Request] = []
        for dg in block.content:
            db = self.datablock_pool.get(dg)
            if db is None:
                return None
            batch.extend(db.requests)
        batch.sort(key=lambda q: q.id.to_bytes())
        return batch

    def _advance_execution(self, out: list[OutputAction]) -> None:
        period = self.params.checkpoint_period
        progressed = False
        while self.applied_upto < self.log.executed_upto:
            serial = self.applied_upto + 1
            block = self.log.entries[serial][0]
            batch = self._block_requests(block)
            if batch is None:
                for dg in sorted(d for d in block.content if d not in self.datablock_pool):
                    self._register_missing(dg, out)
                break
            chain = self.exec_chain
            for request in batch:
                chain = digest(chain + wire.encode_request(request))
                if request.id not in self.executed_ids:
                    self.executed_ids.add(request.id)
                    self.mempool.pop(request.id, None)
                    out.append(AckClient(request.id))
                if request.id in self.tracked_timeouts:
                    self.tracked_timeouts.discard(request.id)
                    out.append(CancelTimer(("reqvc", request.id.client, request.id.seq)))
                self.tagged_pending.discard(request.id)
            self.exec_chain = chain
            self.applied_upto = serial
            self.exec_journal.append((serial, sum(len(q.payload) for q in batch)))
            progressed = True
            if serial % period == 0:
                self.boundary_hashes[serial] = digest(serial.to_bytes(8, "big") + self.exec_chain)
                self._emit_checkpoint_share(serial, out)
        if progressed:
            out.append(ConfirmPrefix(self.applied_upto))

    # ------------------------------------------------------------- checkpoints

    def _emit_checkpoint_share(self, serial: int, out: list[OutputAction]) -> None:
        if self.mode is not Mode.NORMAL or serial in self.checkpointed_boundaries:
            return
        self.checkpointed_boundaries.add(serial)
        cp = Checkpoint(serial, self.boundary_hashes[serial])
        cd = digest(checkpoint_bytes(cp))
        share = self.crypto.sign(self.id, cd)
        if self.is_leader():
            self._collect_checkpoint_share(cp, self.id, share, out)
        else:
            out.append(Send(self.leader, CheckpointShare(self.id, cp, share)))

    def _on_checkpoint_share(self, msg: CheckpointShare, out: list[OutputAction]) -> None:
        if not self.is_leader() or self.mode is not Mode.NORMAL:
            return
        cd = digest(checkpoint_bytes(msg.checkpoint))
        if not self.crypto.verify_share(msg.signer, msg.share, cd):
            return
        self._collect_checkpoint_share(msg.checkpoint, msg.signer, msg.share, out)

    def _collect_checkpoint_share(
        self, cp: Checkpoint, signer: int, share: bytes, out: list[OutputAction]
    ) -> None:
        cd = digest(checkpoint_bytes(cp))
        if cd in self.combined_checkpoints:
            return
        got = self.checkpoint_shares.setdefault(cd, {})
        got[signer] = share
        if len(got) >= self.params.quorum:
            self.combined_checkpoints.add(cd)
            shares = [VoteShare(s, cd, sh) for s, sh in sorted(got.items())]
            proof = self.crypto.combine(shares[: self.params.quorum]).proof
            out.append(Send(BROADCAST, CheckpointProof(cp, proof)))
            self._adopt_checkpoint(cp, proof, out)

    def _on_checkpoint_proof(self, msg: CheckpointProof, out: list[OutputAction]) -> None:
        cd = digest(checkpoint_bytes(msg.checkpoint))
        if not self.crypto.verify_proof(msg.proof, cd):
            return
        self._adopt_checkpoint(msg.checkpoint, msg.proof, out)

    def _adopt_checkpoint(self, cp: Checkpoint, proof: bytes, out: list[OutputAction]) -> None:
        if cp.serial <= self.lw:
            return
        self.lw = cp.serial
        self.latest_checkpoint = (cp, proof)
        self._prune(cp.serial)
        if self.is_leader():
            if self.next_serial <= self.lw:
                self.next_serial = self.lw + 1
            self._try_propose(out, partial=False)

    def _prune(self, upto_serial: int) -> None:
        """Drop request bodies of executed blocks at or below the checkpoint."""
        bound = min(upto_serial, self.applied_upto)
        for serial in range(1, bound + 1):
            entry = self.log.entries.get(serial)
            if entry is None:
                continue
            for dg in entry[0].content:
                self.datablock_pool.pop(dg, None)
                self.encoding_cache.pop(dg, None)
        for serial in [s for s in self.boundary_hashes if s < upto_serial]:
            del self.boundary_hashes[serial]

    # --------------------------------------------------------------- retrieval

    def _register_missing(self, dg: bytes, out: list[OutputAction]) -> None:
        if dg in self.missing or dg in self.datablock_pool or dg in self.records:
            return
        self.missing.add(dg)
        if not self.retrieval_armed:
            self.retrieval_armed = True
            out.append(SetTimer(TIMER_RETRIEVAL, self.params.retrieval_timer_us))

    def _resolve_missing(self, dg: bytes, out: list[OutputAction]) -> None:
        self.missing.discard(dg)
        if not self.missing and self.retrieval_armed:
            self.retrieval_armed = False
            out.append(CancelTimer(TIMER_RETRIEVAL))
        for bd in list(self.pending_blocks):
            pending = self.pending_blocks[bd]
            pending.missing.discard(dg)
            if not pending.missing:
                del self.pending_blocks[bd]
                record = self.records.get(bd)
                if record is not None:
                    self._cast_vote(record, out)
        if self.is_leader():
            self._promote_linkable(dg, out)
        self._advance_execution(out)

    def _on_query(self, msg: Query, out: list[OutputAction]) -> None:
        for dg in msg.digests:
            if (dg, msg.querier) in self.answered_queries:
                continue
            data: bytes | None = None
            db = self.datablock_pool.get(dg)
            if db is not None:
                data = datablock_bytes(db)
            else:
                record = self.records.get(dg)
                if record is not None:
                    data = block_bytes(record.block)
            if data is None:
                continue  # unheld: silence
            self.answered_queries.add((dg, msg.querier))
            cached = self.encoding_cache.get(dg)
            if cached is None:
                chunks = ec_encode(data, self.params.f, self.params.n)
                root, proofs = merkle_build(chunks)
                cached = (chunks, root, proofs)
                self.encoding_cache[dg] = cached
            chunks, root, proofs = cached
            out.append(
                Send(msg.querier, Resp(self.id, root, self.id, chunks[self.id], tuple(proofs[self.id])))
            )

    def _on_resp(self, msg: Resp, out: list[OutputAction]) -> None:
        if not self.missing or msg.root in self.dead_roots:
            return
        if not merkle_verify(msg.root, msg.chunk, msg.index, msg.proof):
            return
        got = self.chunks_by_root.setdefault(msg.root, {})
        if msg.index in got:
            return
        got[msg.index] = msg.chunk
        if len(got) < self.params.f + 1:
            return
        try:
            data = ec_decode(sorted(got.items()), self.params.f, self.params.n)
        except (InsufficientChunks, InconsistentChunks):
            self._discard_root(msg.root)
            return
        dg = digest(data)
        self._discard_root(msg.root)
        if dg not in self.missing:
            return
        if data[:1] == wire.DOM_DATABLOCK:
            try:
                db = decode_datablock_bytes(data)
            except ValueError:
                return
            self.seen_counters.add((db.generator, db.counter))
            self._accept_datablock(db, out, from_self=False)
        elif data[:1] == wire.DOM_BLOCK:
            try:
                block = decode_block_bytes(data)
            except ValueError:
                return
            if digest(block_bytes(block)) == dg:
                self._accept_fetched_block(block, dg, out)

    def _discard_root(self, root: bytes) -> None:
        self.chunks_by_root.pop(root, None)
        self.dead_roots.add(root)

    def _accept_fetched_block(self, block: BFTblock, bd: bytes, out: list[OutputAction]) -> None:
        """A block body recovered by retrieval; pair it with cached proofs."""
        self.records.setdefault(bd, BlockRecord(block))
        self._resolve_missing(bd, out)
        if not block.dummy:
            for dg in sorted(d for d in block.content if d not in self.datablock_pool):
                self._register_missing(dg, out)
        self._apply_cached_proofs(bd, out)

    def _apply_cached_proofs(self, bd: bytes, out: list[OutputAction]) -> None:
        cached = self.cached_notarizations.pop(bd, None)
        if cached is not None:
            self._apply_notarization(bd, cached, out)

    def _on_retrieval_timer(self, out: list[OutputAction]) -> None:
        if not self.missing:
            self.retrieval_armed = False
            return
        out.append(Send(BROADCAST, Query(self.id, tuple(sorted(self.missing)))))
        out.append(SetTimer(TIMER_RETRIEVAL, self.params.retrieval_timer_us))

    # ------------------------------------------------------------ view change

    def _on_timeout(self, msg: Timeout, out: list[OutputAction]) -> None:
        td = digest(timeout_bytes(msg.view))
        if not self.crypto.verify_single(msg.sender, msg.signature, td):
            return
        votes = self.timeout_votes.setdefault(msg.view, {})
        votes[msg.sender] = msg.signature
        floor = self.view if self.vc_target is None else self.vc_target
        if msg.view >= floor and len(votes) >= self.params.f + 1:
            self._abandon_view(msg.view, out)

    def _abandon_view(self, view: int, out: list[OutputAction]) -> None:
        """Give up on a leader: sign a timeout, halt agreement, send state
        to the next leader."""
        if view < self.view or view in self.abandoned:
            return
        self.abandoned.add(view)
        self.mode = Mode.VIEW_CHANGING
        target = view + 1
        self.vc_target = target

        td = digest(timeout_bytes(view))
        sig = self.crypto.sign_single(self.id, td)
        self.timeout_votes.setdefault(view, {})[self.id] = sig
        out.append(Send(BROADCAST, Timeout(view, self.id, sig)))

        vc = self._build_view_change(target)
        new_leader = self.params.leader_of(target)
        if new_leader == self.id:
            self._collect_view_change(vc, out)
        else:
            out.append(Send(new_leader, vc))

        backoff = min(max(target - self.view - 1, 0), 4)
        out.append(SetTimer(("vcprog", target), self.params.viewchange_timer_us << backoff))

    def _build_view_change(self, target: int) -> ViewChange:
        by_serial: dict[int, BFTblock] = {}
        proofs: dict[int, bytes] = {}
        for record in self.records.values():
            if record.state is BlockState.PROPOSED or record.notarization is None:
                continue
            serial = record.block.serial
            if serial <= self.lw:
                continue
            prior = by_serial.get(serial)
            if prior is None or record.block.view > prior.view:
                by_serial[serial] = record.block
                proofs[serial] = record.notarization
        entries = tuple((by_serial[s], proofs[s]) for s in sorted(by_serial))
        body = ViewChange(target, self.latest_checkpoint, entries, self.id, b"\x00" * 48)
        sig = self.crypto.sign_single(self.id, digest(body.signed_bytes()))
        return ViewChange(target, self.latest_checkpoint, entries, self.id, sig)

    def _view_change_valid(self, vc: ViewChange) -> bool:
        body = ViewChange(vc.new_view, vc.checkpoint, vc.entries, vc.sender, b"\x00" * 48)
        if not self.crypto.verify_single(vc.sender, vc.signature, digest(body.signed_bytes())):
            return False
        if vc.checkpoint is not None:
            cp, proof = vc.checkpoint
            if not self.crypto.verify_proof(proof, digest(checkpoint_bytes(cp))):
                return False
        for block, proof in vc.entries:
            if not self.crypto.verify_proof(proof, digest(block_bytes(block))):
                return False
        return True

    def _on_view_change(self, vc: ViewChange, out: list[OutputAction]) -> None:
        if self.params.leader_of(vc.new_view) != self.id or vc.new_view <= self.view:
            return
        if not self._view_change_valid(vc):
            return
        self._collect_view_change(vc, out)

    def _collect_view_change(self, vc: ViewChange, out: list[OutputAction]) -> None:
        got = self.vc_collections.setdefault(vc.new_view, {})
        got.setdefault(vc.sender, vc)
        if len(got) < self.params.quorum or vc.new_view in self.new_view_sent:
            return
        if vc.new_view <= self.view:
            return
        self.new_view_sent.add(vc.new_view)
        chosen = tuple(got[s] for s in sorted(got))[: self.params.quorum]
        body = NewView(vc.new_view, chosen, self.id, b"\x00" * 48)
        sig = self.crypto.sign_single(self.id, digest(body.signed_bytes()))
        nv = NewView(vc.new_view, chosen, self.id, sig)
        out.append(Send(BROADCAST, nv))
        self._adopt_new_view(nv, out)

    def _on_new_view(self, nv: NewView, out: list[OutputAction]) -> None:
        if nv.new_view <= self.view:
            return
        if nv.sender != self.params.leader_of(nv.new_view):
            return
        body = NewView(nv.new_view, nv.view_changes, nv.sender, b"\x00" * 48)
        if not self.crypto.verify_single(nv.sender, nv.signature, digest(body.signed_bytes())):
            return
        senders = {vc.sender for vc in nv.view_changes}
        if len(senders) < self.params.quorum:
            return
        for vc in nv.view_changes:
            if vc.new_view != nv.new_view or not self._view_change_valid(vc):
                return
        self._adopt_new_view(nv, out)

    def _adopt_new_view(self, nv: NewView, out: list[OutputAction]) -> None:
        self.view = nv.new_view
        self.mode = Mode.NORMAL
        self.vc_target = None
        self.linked = set()

        # highest stable checkpoint carried by the quorum
        best: tuple[Checkpoint, bytes] | None = None
        for vc in nv.view_changes:
            if vc.checkpoint is not None and (
                best is None or vc.checkpoint[0].serial > best[0].serial
            ):
                best = vc.checkpoint
        if best is not None and best[0].serial > self.lw:
            self.lw = best[0].serial
            self.latest_checkpoint = best
            self._prune(best[0].serial)

        # surviving notarized blocks, one per serial
        carried: dict[int, BFTblock] = {}
        for vc in nv.view_changes:
            for block, _proof in vc.entries:
                if block.serial <= self.lw:
                    continue
                prior = carried.get(block.serial)
                if prior is None or block.view > prior.view:
                    carried[block.serial] = block

        if self.id == self.params.leader_of(nv.new_view):
            self._lead_new_view(carried, out)
        else:
            self.open_serials.clear()
            self.linkable.clear()
            self._announce_held_datablocks(out)

        # resume normal-case machinery that was paused or missed
        for proposal in self.future_proposals.pop(self.view, []):
            self._on_proposal(proposal, out)
        for serial in sorted(self.boundary_hashes):
            if self.lw < serial <= self.applied_upto and serial not in self.checkpointed_boundaries:
                self._emit_checkpoint_share(serial, out)
        for rid in sorted(self.tagged_pending - self.tracked_timeouts, key=lambda r: (r.client, r.seq)):
            self.tracked_timeouts.add(rid)
            out.append(SetTimer(("reqvc", rid.client, rid.seq), self.params.viewchange_timer_us))
        if self.mempool and not self.is_leader():
            self._emit_datablocks(out, partial=False)
            if self.mempool and not self.flush_armed:
                self.flush_armed = True
                out.append(SetTimer(TIMER_FLUSH, self.params.flush_us))

    def _lead_new_view(self, carried: dict[int, BFTblock], out: list[OutputAction]) -> None:
        """Re-run agreement for surviving blocks at their serials, dummies in gaps."""
        self.open_serials.clear()
        self.linkable.clear()
        self.ready_senders = {}
        for dg in sorted(self.datablock_pool):
            self._credit_ready(dg, self.id)
            self._credit_ready(dg, self.datablock_pool[dg].generator)
        top = max(carried) if carried else self.lw
        self.next_serial = max(top, self.lw) + 1
        for serial in range(self.lw + 1, top + 1):
            old = carried.get(serial)
            if old is None:
                block = BFTblock(self.view, serial, (), dummy=True)
            else:
                block = BFTblock(self.view, serial, old.content, old.dummy)
                self.linked.update(old.content)
            self._propose_block(block, out)

    def _announce_held_datablocks(self, out: list[OutputAction]) -> None:
        """Re-attest readiness to the new leader for datablocks not yet confirmed."""
        for dg in sorted(self.datablock_pool):
            if dg not in self.linked_digests:
                out.append(Send(self.leader, Ready(dg, self.id)))

    # ----------------------------------------------------------------- timers

    def _on_timer(self, timer_id: tuple, out: list[OutputAction]) -> None:
        kind = timer_id[0]
        if kind == "flush":
            self.flush_armed = False
            if self.mempool and not self.is_leader():
                # flush partial batches once the inflow goes quiet (keeps
                # steady-state datablocks full), but never hold a request
                # past a bounded staleness
                quiet = self.now - self.last_mempool_add >= self.params.flush_us
                stale = self.now - self.oldest_pending >= 4 * self.params.flush_us
                if quiet or stale:
                    self._emit_datablocks(out, partial=True)
                if self.mempool:
                    self.flush_armed = True
                    out.append(SetTimer(TIMER_FLUSH, self.params.flush_us))
        elif kind == "propose_flush":
            self.propose_flush_armed = False
            if self.linkable and self.is_leader():
                quiet = self.now - self.last_linkable_add >= self.params.flush_us
                stale = self.now - self.oldest_linkable >= 4 * self.params.flush_us
                if quiet or stale:
                    self._try_propose(out, partial=True)
                if self.linkable:
                    self.propose_flush_armed = True
                    out.append(SetTimer(TIMER_PROPOSE, self.params.flush_us))
        elif kind == "retrieval":
            self._on_retrieval_timer(out)
        elif kind == "reqvc":
            rid = RequestId(timer_id[1], timer_id[2])
            self.tracked_timeouts.discard(rid)
            if rid not in self.executed_ids and self.mode is Mode.NORMAL:
                self._abandon_view(self.view, out)
        elif kind == "vcprog":
            target = timer_id[1]
            if self.mode is Mode.VIEW_CHANGING and self.vc_target == target:
                self._abandon_view(target, out)
