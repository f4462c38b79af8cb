"""Domain vocabulary: identities, simulated crypto, values, blocks, messages, QCs.

All types are immutable value objects. Crypto is simulation-grade: a digest is
a truncated blake2b of the canonical encoding, and a signature is the pair
(signer, payload digest) whose authenticity is enforced structurally by the
network layer (a node can only emit messages signed as itself).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Optional, Union

DIGEST_SIZE = 16
ZERO_DIGEST = bytes(DIGEST_SIZE)

PHASE_COUNT = 3  # PROPOSE, PREENDORSE, ENDORSE


class ProtocolError(Exception):
    pass


class MalformedPoc(ProtocolError):
    """A proposal used as head justification lacks its endorsement QC."""


class DecodeError(ProtocolError):
    pass


class MsgKind(IntEnum):
    PROPOSE = 0
    PREENDORSE = 1
    ENDORSE = 2
    PREENDORSEMENTS = 3


class QCKind(IntEnum):
    PREENDORSEMENT = 0
    ENDORSEMENT = 1


class Phase(Enum):
    PROPOSE = 0
    PREENDORSE = 1
    ENDORSE = 2


@dataclass(frozen=True)
class Signature:
    signer: int
    payload_digest: bytes


@dataclass(frozen=True)
class Value:
    """Block contents; opaque to the protocol, injective over its fields."""

    creator: int
    level: int
    round: int
    nonce: int


@dataclass(frozen=True)
class OutputValue:
    """What one consensus instance decides: contents plus predecessor hash."""

    contents: Value
    pred_hash: bytes


@dataclass(frozen=True)
class QuorumCertificate:
    kind: QCKind
    level: int
    round: int
    pred_hash: bytes
    value_hash: bytes
    votes: tuple[Signature, ...]  # sorted by signer id, pairwise distinct


@dataclass(frozen=True)
class BlockHeader:
    level: int
    round: int  # round at which the block was produced
    pred_hash: bytes
    endorsement_qc: Optional[QuorumCertificate]  # for level-1; absent at levels 0 and 1
    endorsable_round: int  # 0 if the payload was fresh
    preendorsement_qc: Optional[QuorumCertificate]  # absent iff endorsable_round == 0


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    contents: Value


@dataclass(frozen=True)
class ProposePayload:
    endorsement_qc: Optional[QuorumCertificate]
    value: Value
    endorsable_round: int
    preendorsement_qc: Optional[QuorumCertificate]


# Preendorse/Endorse carry a value hash; Preendorsements carries a QC.
Payload = Union[ProposePayload, bytes, QuorumCertificate]


@dataclass(frozen=True)
class Message:
    kind: MsgKind
    sender: int
    level: int
    round: int
    pred_hash: bytes
    payload: Payload
    sig: Signature


@dataclass(frozen=True)
class Genesis:
    """A-priori agreed bootstrap data: creation time, committee seed, look-back."""

    t0: int
    seed: bytes
    lookback: int


# ---------------------------------------------------------------------------
# Canonical encoding: injective, deterministic, platform-independent.
# Fixed-width big-endian integers, length-prefixed byte fields, one leading
# type tag per composite, vote sets sorted by signer id.
# ---------------------------------------------------------------------------

_TAG_VALUE = 1
_TAG_OUTPUT = 2
_TAG_SIG = 3
_TAG_QC = 4
_TAG_HEADER = 5
_TAG_BLOCK = 6
_TAG_MSG = 7
_TAG_PREFIX = 9


def _u64(x: int) -> bytes:
    return x.to_bytes(8, "big")


def _blob(b: bytes) -> bytes:
    return len(b).to_bytes(4, "big") + b


def _opt(b: Optional[bytes]) -> bytes:
    return b"\x00" if b is None else b"\x01" + b


def encode(x) -> bytes:
    if isinstance(x, Value):
        return bytes([_TAG_VALUE]) + _u64(x.creator) + _u64(x.level) + _u64(x.round) + _u64(x.nonce)
    if isinstance(x, OutputValue):
        return bytes([_TAG_OUTPUT]) + encode(x.contents) + _blob(x.pred_hash)
    if isinstance(x, Signature):
        return bytes([_TAG_SIG]) + _u64(x.signer) + _blob(x.payload_digest)
    if isinstance(x, QuorumCertificate):
        votes = sorted(x.votes, key=lambda s: s.signer)
        body = _u64(len(votes)) + b"".join(encode(v) for v in votes)
        return (
            bytes([_TAG_QC, x.kind])
            + _u64(x.level)
            + _u64(x.round)
            + _blob(x.pred_hash)
            + _blob(x.value_hash)
            + body
        )
    if isinstance(x, BlockHeader):
        return (
            bytes([_TAG_HEADER])
            + _u64(x.level)
            + _u64(x.round)
            + _blob(x.pred_hash)
            + _opt(encode(x.endorsement_qc) if x.endorsement_qc else None)
            + _u64(x.endorsable_round)
            + _opt(encode(x.preendorsement_qc) if x.preendorsement_qc else None)
        )
    if isinstance(x, Block):
        return bytes([_TAG_BLOCK]) + encode(x.header) + encode(x.contents)
    if isinstance(x, Message):
        return bytes([_TAG_MSG]) + _msg_body(x) + encode(x.sig)
    if isinstance(x, tuple):  # sequence of encodables (chains, value prefixes)
        return bytes([_TAG_PREFIX]) + _u64(len(x)) + b"".join(encode(e) for e in x)
    raise TypeError(f"not canonically encodable: {type(x).__name__}")


def _payload_bytes(kind: MsgKind, payload: Payload) -> bytes:
    if kind is MsgKind.PROPOSE:
        assert isinstance(payload, ProposePayload)
        return (
            _opt(encode(payload.endorsement_qc) if payload.endorsement_qc else None)
            + encode(payload.value)
            + _u64(payload.endorsable_round)
            + _opt(encode(payload.preendorsement_qc) if payload.preendorsement_qc else None)
        )
    if kind is MsgKind.PREENDORSEMENTS:
        assert isinstance(payload, QuorumCertificate)
        return encode(payload)
    assert isinstance(payload, bytes)
    return _blob(payload)


def _msg_body(m: Message) -> bytes:
    return (
        bytes([m.kind])
        + _u64(m.sender)
        + _u64(m.level)
        + _u64(m.round)
        + _blob(m.pred_hash)
        + _payload_bytes(m.kind, m.payload)
    )


# --- decoding ---------------------------------------------------------------


class _Cursor:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DecodeError("truncated input")
        b = self.buf[self.pos : self.pos + n]
        self.pos += n
        return b

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def u8(self) -> int:
        return self.take(1)[0]

    def blob(self) -> bytes:
        n = int.from_bytes(self.take(4), "big")
        return self.take(n)

    def expect_tag(self, tag: int) -> None:
        got = self.u8()
        if got != tag:
            raise DecodeError(f"expected tag {tag}, got {got}")


def _dec_value(c: _Cursor) -> Value:
    c.expect_tag(_TAG_VALUE)
    return Value(c.u64(), c.u64(), c.u64(), c.u64())


def _dec_sig(c: _Cursor) -> Signature:
    c.expect_tag(_TAG_SIG)
    return Signature(c.u64(), c.blob())


def _dec_qc(c: _Cursor) -> QuorumCertificate:
    c.expect_tag(_TAG_QC)
    kind = QCKind(c.u8())
    level, rnd = c.u64(), c.u64()
    pred_hash, value_hash = c.blob(), c.blob()
    votes = tuple(_dec_sig(c) for _ in range(c.u64()))
    return QuorumCertificate(kind, level, rnd, pred_hash, value_hash, votes)


def _dec_opt_qc(c: _Cursor) -> Optional[QuorumCertificate]:
    return _dec_qc(c) if c.u8() else None


def _dec_header(c: _Cursor) -> BlockHeader:
    c.expect_tag(_TAG_HEADER)
    level, rnd = c.u64(), c.u64()
    pred_hash = c.blob()
    eqc = _dec_opt_qc(c)
    er = c.u64()
    pqc = _dec_opt_qc(c)
    return BlockHeader(level, rnd, pred_hash, eqc, er, pqc)


def _dec_block(c: _Cursor) -> Block:
    c.expect_tag(_TAG_BLOCK)
    return Block(_dec_header(c), _dec_value(c))


def _dec_message(c: _Cursor) -> Message:
    c.expect_tag(_TAG_MSG)
    kind = MsgKind(c.u8())
    sender, level, rnd = c.u64(), c.u64(), c.u64()
    pred_hash = c.blob()
    payload: Payload
    if kind is MsgKind.PROPOSE:
        eqc = _dec_opt_qc(c)
        value = _dec_value(c)
        er = c.u64()
        pqc = _dec_opt_qc(c)
        payload = ProposePayload(eqc, value, er, pqc)
    elif kind is MsgKind.PREENDORSEMENTS:
        payload = _dec_qc(c)
    else:
        payload = c.blob()
    sig = _dec_sig(c)
    return Message(kind, sender, level, rnd, pred_hash, payload, sig)


def _finish(c: _Cursor, x):
    if c.pos != len(c.buf):
        raise DecodeError("trailing bytes")
    return x


def decode_value(b: bytes) -> Value:
    return _finish(c := _Cursor(b), _dec_value(c))


def decode_qc(b: bytes) -> QuorumCertificate:
    return _finish(c := _Cursor(b), _dec_qc(c))


def decode_block(b: bytes) -> Block:
    return _finish(c := _Cursor(b), _dec_block(c))


def decode_message(b: bytes) -> Message:
    return _finish(c := _Cursor(b), _dec_message(c))


def decode_chain(b: bytes) -> tuple[Block, ...]:
    c = _Cursor(b)
    c.expect_tag(_TAG_PREFIX)
    return _finish(c, tuple(_dec_block(c) for _ in range(c.u64())))


# ---------------------------------------------------------------------------
# Hashing; perfect-hash model backed by an optional per-run registry.
# ---------------------------------------------------------------------------

_digest_registry: Optional[dict[bytes, bytes]] = None


def reset_digest_registry(enabled: bool = True) -> None:
    """Start a fresh collision registry (call once per simulation run)."""
    global _digest_registry
    _digest_registry = {} if enabled else None


def _digest(data: bytes) -> bytes:
    d = hashlib.blake2b(data, digest_size=DIGEST_SIZE).digest()
    reg = _digest_registry
    if reg is not None:
        prev = reg.setdefault(d, data)
        if prev != data:
            raise AssertionError("digest collision; perfect-hash model broken")
    return d


def hash_of(x: Union[Block, Value]) -> bytes:
    """Digest of the canonical encoding, cached on the object."""
    d = x.__dict__.get("_digest")
    if d is None:
        d = _digest(encode(x))
        object.__setattr__(x, "_digest", d)
    return d


def signing_digest(kind: MsgKind, sender: int, level: int, round: int,
                   pred_hash: bytes, payload: Payload) -> bytes:
    return _digest(
        bytes([_TAG_MSG, kind]) + _u64(sender) + _u64(level) + _u64(round)
        + _blob(pred_hash) + _payload_bytes(kind, payload)
    )


def make_message(kind: MsgKind, sender: int, level: int, round: int,
                 pred_hash: bytes, payload: Payload) -> Message:
    """Build a message signed as `sender` (the only way a node can sign)."""
    sig = Signature(sender, signing_digest(kind, sender, level, round, pred_hash, payload))
    return Message(kind, sender, level, round, pred_hash, payload, sig)


def message_sig_valid(m: Message) -> bool:
    return (
        m.sig.signer == m.sender
        and m.sig.payload_digest
        == signing_digest(m.kind, m.sender, m.level, m.round, m.pred_hash, m.payload)
    )


_VOTE_MSG_KIND = {QCKind.PREENDORSEMENT: MsgKind.PREENDORSE, QCKind.ENDORSEMENT: MsgKind.ENDORSE}


def vote_digest(kind: QCKind, signer: int, level: int, round: int,
                pred_hash: bytes, value_hash: bytes) -> bytes:
    """Digest a QC vote must carry: the signing digest of the matching vote message."""
    return signing_digest(_VOTE_MSG_KIND[kind], signer, level, round, pred_hash, value_hash)


def make_qc(kind: QCKind, level: int, round: int, pred_hash: bytes,
            value_hash: bytes, votes) -> QuorumCertificate:
    ordered = tuple(sorted(votes, key=lambda s: s.signer))
    return QuorumCertificate(kind, level, round, pred_hash, value_hash, ordered)


def check_qc(qc: QuorumCertificate, kind: QCKind, level: int, round: int,
             pred_hash: bytes, value_hash: bytes, committee, f: int) -> bool:
    """True iff the QC is a >= 2f+1 quorum of distinct committee members over
    exactly the expected (kind, level, round, pred_hash, value_hash)."""
    if (qc.kind, qc.level, qc.round, qc.pred_hash, qc.value_hash) != (
        kind, level, round, pred_hash, value_hash,
    ):
        return False
    signers = {v.signer for v in qc.votes}
    if len(signers) != len(qc.votes) or len(signers) < 2 * f + 1:
        return False
    members = set(committee)
    for v in qc.votes:
        if v.signer not in members:
            return False
        if v.payload_digest != vote_digest(kind, v.signer, level, round, pred_hash, value_hash):
            return False
    return True


# ---------------------------------------------------------------------------
# Genesis block and Propose <-> Block interconversion.
# ---------------------------------------------------------------------------


def make_genesis_block(genesis: Genesis) -> Block:
    seed_material = b"genesis" + _u64(genesis.t0) + _blob(genesis.seed) + _u64(genesis.lookback)
    nonce = int.from_bytes(hashlib.blake2b(seed_material, digest_size=8).digest(), "big")
    header = BlockHeader(
        level=0, round=0, pred_hash=ZERO_DIGEST,
        endorsement_qc=None, endorsable_round=0, preendorsement_qc=None,
    )
    return Block(header, Value(creator=0, level=0, round=0, nonce=nonce))


def block_from_proposal(m: Message) -> Block:
    assert m.kind is MsgKind.PROPOSE and isinstance(m.payload, ProposePayload)
    p = m.payload
    header = BlockHeader(m.level, m.round, m.pred_hash,
                         p.endorsement_qc, p.endorsable_round, p.preendorsement_qc)
    return Block(header, p.value)


def proposal_from_block(b: Block) -> Message:
    """Inverse of block_from_proposal; the signature is recomputed, which in the
    perfect-crypto model equals the original proposer's signature."""
    h = b.header
    payload = ProposePayload(h.endorsement_qc, b.contents, h.endorsable_round, h.preendorsement_qc)
    return make_message(MsgKind.PROPOSE, b.contents.creator, h.level, h.round, h.pred_hash, payload)
