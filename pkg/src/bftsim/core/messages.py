"""Protocol message catalog and the canonical wire encoding.

Every message encodes as a one-byte type tag followed by its fields in
declaration order: integers are fixed-width big-endian, variable-length
fields carry a u32 length prefix.  The encoding is deterministic and
injective, so hashing and signing are defined over these bytes.

Structures that get hashed on their own (datablocks, proposals'
blocks, checkpoints, notarization proofs) carry a distinct domain
prefix so digests of different kinds can never collide.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

from .types import DIGEST_SIZE, SHARE_SIZE, BFTblock, Checkpoint, Datablock, Request, RequestId

# wire tags
TAG_CLIENT_REQUEST = 1
TAG_DATABLOCK = 2
TAG_READY = 3
TAG_PROPOSAL = 4
TAG_PREPARE_SHARE = 5
TAG_NOTARIZATION = 6
TAG_COMMIT_SHARE = 7
TAG_CONFIRMATION = 8
TAG_QUERY = 9
TAG_RESP = 10
TAG_CHECKPOINT_SHARE = 11
TAG_CHECKPOINT_PROOF = 12
TAG_TIMEOUT = 13
TAG_VIEW_CHANGE = 14
TAG_NEW_VIEW = 15
TAG_CLIENT_ACK = 16

# domain prefixes for hashed structures
DOM_DATABLOCK = b"\x41"
DOM_BLOCK = b"\x42"
DOM_CHECKPOINT = b"\x43"
DOM_NOTARIZATION = b"\x44"
DOM_TIMEOUT = b"\x45"
DOM_VIEW_CHANGE = b"\x46"
DOM_NEW_VIEW = b"\x47"


def _u16(x: int) -> bytes:
    return struct.pack(">H", x)


def _u32(x: int) -> bytes:
    return struct.pack(">I", x)


def _u64(x: int) -> bytes:
    return struct.pack(">Q", x)


def _blob(b: bytes) -> bytes:
    return _u32(len(b)) + b


class _Reader:
    """Sequential decoder over one canonical byte string."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, k: int) -> bytes:
        if self.pos + k > len(self.data):
            raise ValueError("truncated message")
        out = self.data[self.pos : self.pos + k]
        self.pos += k
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def done(self) -> bool:
        return self.pos == len(self.data)


# ---------------------------------------------------------------------------
# encodings of nested structures


def encode_request(req: Request) -> bytes:
    return req.id.to_bytes() + (b"\x01" if req.timeout_tag else b"\x00") + _blob(req.payload)


def _decode_request(r: _Reader) -> Request:
    client = r.u32()
    seq = r.u32()
    tag = r.u8() == 1
    payload = r.blob()
    return Request(RequestId(client, seq), payload, tag)


def datablock_bytes(db: Datablock) -> bytes:
    """Hashable encoding of a datablock; also the payload recovered by retrieval."""
    parts = [DOM_DATABLOCK, _u16(db.generator), _u64(db.counter), _u32(len(db.requests))]
    parts.extend(encode_request(q) for q in db.requests)
    return b"".join(parts)


def decode_datablock_bytes(data: bytes) -> Datablock:
    r = _Reader(data)
    if r.take(1) != DOM_DATABLOCK:
        raise ValueError("not a datablock encoding")
    generator = r.u16()
    counter = r.u64()
    count = r.u32()
    requests = tuple(_decode_request(r) for _ in range(count))
    if not r.done():
        raise ValueError("trailing bytes in datablock encoding")
    return Datablock(generator, counter, requests)


def block_bytes(block: BFTblock) -> bytes:
    parts = [
        DOM_BLOCK,
        _u32(block.view),
        _u64(block.serial),
        b"\x01" if block.dummy else b"\x00",
        _u32(len(block.content)),
    ]
    parts.extend(block.content)
    return b"".join(parts)


def decode_block_bytes(data: bytes) -> BFTblock:
    r = _Reader(data)
    if r.take(1) != DOM_BLOCK:
        raise ValueError("not a block encoding")
    view = r.u32()
    serial = r.u64()
    dummy = r.u8() == 1
    count = r.u32()
    content = tuple(r.take(DIGEST_SIZE) for _ in range(count))
    if not r.done():
        raise ValueError("trailing bytes in block encoding")
    return BFTblock(view, serial, content, dummy)


def checkpoint_bytes(cp: Checkpoint) -> bytes:
    return DOM_CHECKPOINT + _u64(cp.serial) + cp.state_hash


def timeout_bytes(view: int) -> bytes:
    return DOM_TIMEOUT + _u32(view)


# ---------------------------------------------------------------------------
# message classes


class _Wire:
    """Caches the canonical encoding; messages are immutable so one pass suffices."""

    @cached_property
    def wire(self) -> bytes:
        return self._encode()  # type: ignore[attr-defined]


@dataclass(frozen=True)
class ClientRequestMsg(_Wire):
    requests: tuple[Request, ...]

    def _encode(self) -> bytes:
        parts = [bytes([TAG_CLIENT_REQUEST]), _u32(len(self.requests))]
        parts.extend(encode_request(q) for q in self.requests)
        return b"".join(parts)


@dataclass(frozen=True)
class DatablockMsg(_Wire):
    datablock: Datablock

    def _encode(self) -> bytes:
        return bytes([TAG_DATABLOCK]) + datablock_bytes(self.datablock)


@dataclass(frozen=True)
class Ready(_Wire):
    digest: bytes
    sender: int

    def _encode(self) -> bytes:
        return bytes([TAG_READY]) + _u16(self.sender) + self.digest


@dataclass(frozen=True)
class Proposal(_Wire):
    block: BFTblock
    leader_share: bytes

    def _encode(self) -> bytes:
        return bytes([TAG_PROPOSAL]) + _blob(block_bytes(self.block)) + self.leader_share


@dataclass(frozen=True)
class PrepareShare(_Wire):
    signer: int
    block_digest: bytes
    share: bytes

    def _encode(self) -> bytes:
        return bytes([TAG_PREPARE_SHARE]) + _u16(self.signer) + self.block_digest + self.share


@dataclass(frozen=True)
class Notarization(_Wire):
    block_digest: bytes
    proof: bytes

    def _encode(self) -> bytes:
        return bytes([TAG_NOTARIZATION]) + self.block_digest + self.proof


@dataclass(frozen=True)
class CommitShare(_Wire):
    signer: int
    notarization_digest: bytes
    share: bytes

    def _encode(self) -> bytes:
        return bytes([TAG_COMMIT_SHARE]) + _u16(self.signer) + self.notarization_digest + self.share


@dataclass(frozen=True)
class Confirmation(_Wire):
    notarization_digest: bytes
    proof: bytes

    def _encode(self) -> bytes:
        return bytes([TAG_CONFIRMATION]) + self.notarization_digest + self.proof


@dataclass(frozen=True)
class Query(_Wire):
    querier: int
    digests: tuple[bytes, ...]

    def _encode(self) -> bytes:
        return bytes([TAG_QUERY]) + _u16(self.querier) + _u32(len(self.digests)) + b"".join(self.digests)


@dataclass(frozen=True)
class Resp(_Wire):
    responder: int
    root: bytes
    index: int
    chunk: bytes
    proof: tuple[tuple[bytes, int], ...]  # (sibling digest, side); side 0 = sibling on the left

    def _encode(self) -> bytes:
        parts = [bytes([TAG_RESP]), _u16(self.responder), self.root, _u16(self.index), _blob(self.chunk)]
        parts.append(_u32(len(self.proof)))
        for sibling, side in self.proof:
            parts.append(bytes([side]) + sibling)
        return b"".join(parts)


@dataclass(frozen=True)
class CheckpointShare(_Wire):
    signer: int
    checkpoint: Checkpoint
    share: bytes

    def _encode(self) -> bytes:
        return (
            bytes([TAG_CHECKPOINT_SHARE])
            + _u16(self.signer)
            + _u64(self.checkpoint.serial)
            + self.checkpoint.state_hash
            + self.share
        )


@dataclass(frozen=True)
class CheckpointProof(_Wire):
    checkpoint: Checkpoint
    proof: bytes

    def _encode(self) -> bytes:
        return bytes([TAG_CHECKPOINT_PROOF]) + _u64(self.checkpoint.serial) + self.checkpoint.state_hash + self.proof


@dataclass(frozen=True)
class Timeout(_Wire):
    view: int
    sender: int
    signature: bytes

    def _encode(self) -> bytes:
        return bytes([TAG_TIMEOUT]) + _u32(self.view) + _u16(self.sender) + self.signature


@dataclass(frozen=True)
class ViewChange(_Wire):
    new_view: int
    checkpoint: tuple[Checkpoint, bytes] | None  # latest stable checkpoint with its proof
    entries: tuple[tuple[BFTblock, bytes], ...]  # notarized blocks above the watermark, with proofs
    sender: int
    signature: bytes

    def signed_bytes(self) -> bytes:
        return DOM_VIEW_CHANGE + self._body()

    def _body(self) -> bytes:
        parts = [_u32(self.new_view)]
        if self.checkpoint is None:
            parts.append(b"\x00")
        else:
            cp, proof = self.checkpoint
            parts.append(b"\x01" + _u64(cp.serial) + cp.state_hash + proof)
        parts.append(_u32(len(self.entries)))
        for block, proof in self.entries:
            parts.append(_blob(block_bytes(block)) + proof)
        parts.append(_u16(self.sender))
        return b"".join(parts)

    def _encode(self) -> bytes:
        return bytes([TAG_VIEW_CHANGE]) + self._body() + self.signature


@dataclass(frozen=True)
class NewView(_Wire):
    new_view: int
    view_changes: tuple[ViewChange, ...]
    sender: int
    signature: bytes

    def signed_bytes(self) -> bytes:
        return DOM_NEW_VIEW + self._body()

    def _body(self) -> bytes:
        parts = [_u32(self.new_view), _u32(len(self.view_changes))]
        for vc in self.view_changes:
            parts.append(_blob(vc._encode()))
        parts.append(_u16(self.sender))
        return b"".join(parts)

    def _encode(self) -> bytes:
        return bytes([TAG_NEW_VIEW]) + self._body() + self.signature


@dataclass(frozen=True)
class ClientAck(_Wire):
    request_ids: tuple[RequestId, ...]

    def _encode(self) -> bytes:
        parts = [bytes([TAG_CLIENT_ACK]), _u32(len(self.request_ids))]
        parts.extend(rid.to_bytes() for rid in self.request_ids)
        return b"".join(parts)


Message = (
    ClientRequestMsg
    | DatablockMsg
    | Ready
    | Proposal
    | PrepareShare
    | Notarization
    | CommitShare
    | Confirmation
    | Query
    | Resp
    | CheckpointShare
    | CheckpointProof
    | Timeout
    | ViewChange
    | NewView
    | ClientAck
)

def canonical_encode(msg: Message) -> bytes:
    """Deterministic, injective byte encoding of a protocol message.

    Cached on the message object: large messages (datablocks) are
    encoded once and the bytes reused for hashing, byte accounting,
    and transport.
    """
    return msg.wire


def wire_size(msg: Message) -> int:
    return len(msg.wire)


def canonical_decode(data: bytes) -> Message:
    """Inverse of canonical_encode; raises ValueError on malformed input."""
    r = _Reader(data)
    tag = r.u8()
    if tag == TAG_CLIENT_REQUEST:
        count = r.u32()
        msg: Message = ClientRequestMsg(tuple(_decode_request(r) for _ in range(count)))
    elif tag == TAG_DATABLOCK:
        msg = DatablockMsg(decode_datablock_bytes(data[1:]))
        return msg
    elif tag == TAG_READY:
        msg = Ready(sender=r.u16(), digest=r.take(DIGEST_SIZE))
    elif tag == TAG_PROPOSAL:
        block = decode_block_bytes(r.blob())
        msg = Proposal(block, r.take(SHARE_SIZE))
    elif tag == TAG_PREPARE_SHARE:
        msg = PrepareShare(r.u16(), r.take(DIGEST_SIZE), r.take(SHARE_SIZE))
    elif tag == TAG_NOTARIZATION:
        msg = Notarization(r.take(DIGEST_SIZE), r.take(SHARE_SIZE))
    elif tag == TAG_COMMIT_SHARE:
        msg = CommitShare(r.u16(), r.take(DIGEST_SIZE), r.take(SHARE_SIZE))
    elif tag == TAG_CONFIRMATION:
        msg = Confirmation(r.take(DIGEST_SIZE), r.take(SHARE_SIZE))
    elif tag == TAG_QUERY:
        querier = r.u16()
        count = r.u32()
        msg = Query(querier, tuple(r.take(DIGEST_SIZE) for _ in range(count)))
    elif tag == TAG_RESP:
        responder = r.u16()
        root = r.take(DIGEST_SIZE)
        index = r.u16()
        chunk = r.blob()
        count = r.u32()
        proof = []
        for _ in range(count):
            side = r.u8()
            proof.append((r.take(DIGEST_SIZE), side))
        msg = Resp(responder, root, index, chunk, tuple(proof))
    elif tag == TAG_CHECKPOINT_SHARE:
        msg = CheckpointShare(r.u16(), Checkpoint(r.u64(), r.take(DIGEST_SIZE)), r.take(SHARE_SIZE))
    elif tag == TAG_CHECKPOINT_PROOF:
        msg = CheckpointProof(Checkpoint(r.u64(), r.take(DIGEST_SIZE)), r.take(SHARE_SIZE))
    elif tag == TAG_TIMEOUT:
        msg = Timeout(r.u32(), r.u16(), r.take(SHARE_SIZE))
    elif tag == TAG_VIEW_CHANGE:
        msg = _decode_view_change(r)
    elif tag == TAG_NEW_VIEW:
        new_view = r.u32()
        count = r.u32()
        vcs = []
        for _ in range(count):
            inner = _Reader(r.blob())
            if inner.u8() != TAG_VIEW_CHANGE:
                raise ValueError("new-view set must contain view-change messages")
            vcs.append(_decode_view_change(inner))
        msg = NewView(new_view, tuple(vcs), r.u16(), r.take(SHARE_SIZE))
    elif tag == TAG_CLIENT_ACK:
        count = r.u32()
        msg = ClientAck(tuple(RequestId(r.u32(), r.u32()) for _ in range(count)))
    else:
        raise ValueError(f"unknown message tag {tag}")
    if not r.done():
        raise ValueError("trailing bytes after message")
    return msg


def _decode_view_change(r: _Reader) -> ViewChange:
    new_view = r.u32()
    checkpoint = None
    if r.u8() == 1:
        cp = Checkpoint(r.u64(), r.take(DIGEST_SIZE))
        checkpoint = (cp, r.take(SHARE_SIZE))
    count = r.u32()
    entries = tuple((decode_block_bytes(r.blob()), r.take(SHARE_SIZE)) for _ in range(count))
    return ViewChange(new_view, checkpoint, entries, r.u16(), r.take(SHARE_SIZE))


# metrics category per message type
CATEGORY = {
    ClientRequestMsg: "ClientTraffic",
    ClientAck: "ClientTraffic",
    DatablockMsg: "Datablock",
    Ready: "Ready",
    Proposal: "BFTblock",
    PrepareShare: "PrepareShare",
    Notarization: "Notarization",
    CommitShare: "CommitShare",
    Confirmation: "Confirmation",
    Query: "Query",
    Resp: "Resp",
    CheckpointShare: "Checkpoint",
    CheckpointProof: "Checkpoint",
    Timeout: "ViewChange",
    ViewChange: "ViewChange",
    NewView: "ViewChange",
}

CATEGORIES = (
    "Datablock",
    "Ready",
    "BFTblock",
    "PrepareShare",
    "Notarization",
    "CommitShare",
    "Confirmation",
    "Query",
    "Resp",
    "Checkpoint",
    "ViewChange",
    "ClientTraffic",
    "Misc",
)


def category_of(msg: Message) -> str:
    return CATEGORY.get(type(msg), "Misc")
