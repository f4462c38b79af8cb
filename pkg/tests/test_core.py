"""Canonical encoding, hashing, signatures, and quorum certificate checks."""

import pytest

from drcsim.core import (
    Block,
    BlockHeader,
    Genesis,
    MsgKind,
    ProposePayload,
    QCKind,
    Signature,
    Value,
    ZERO_DIGEST,
    block_from_proposal,
    check_qc,
    decode_block,
    decode_message,
    decode_qc,
    decode_value,
    encode,
    hash_of,
    make_genesis_block,
    make_message,
    make_qc,
    message_sig_valid,
    proposal_from_block,
    vote_digest,
)

from conftest import GSEED, qc_of


def test_encode_deterministic():
    v = Value(1, 2, 3, 4)
    assert encode(v) == encode(Value(1, 2, 3, 4))


def test_encode_injective_on_nonce():
    assert encode(Value(1, 2, 3, 4)) != encode(Value(1, 2, 3, 5))


def test_qc_encoding_ignores_vote_insertion_order():
    # oracle: canonical form sorts votes by signer id
    d = lambda s: vote_digest(QCKind.ENDORSEMENT, s, 1, 1, ZERO_DIGEST, b"\x01" * 16)
    votes_a = [Signature(s, d(s)) for s in (3, 1, 2)]
    votes_b = [Signature(s, d(s)) for s in (1, 2, 3)]
    qc_a = make_qc(QCKind.ENDORSEMENT, 1, 1, ZERO_DIGEST, b"\x01" * 16, votes_a)
    qc_b = make_qc(QCKind.ENDORSEMENT, 1, 1, ZERO_DIGEST, b"\x01" * 16, votes_b)
    assert encode(qc_a) == encode(qc_b)
    assert [v.signer for v in qc_a.votes] == sorted(v.signer for v in qc_a.votes)


def test_value_roundtrip():
    v = Value(7, 1, 2, 12345)
    assert decode_value(encode(v)) == v


def test_block_roundtrip(genesis_block):
    assert decode_block(encode(genesis_block)) == genesis_block


def test_message_roundtrip(genesis_block):
    v = Value(2, 1, 1, 9)
    pqc = qc_of(QCKind.PREENDORSEMENT, 1, 1, hash_of(genesis_block), hash_of(v), [0, 1, 2])
    payload = ProposePayload(None, v, 1, pqc)
    m = make_message(MsgKind.PROPOSE, 2, 1, 2, hash_of(genesis_block), payload)
    assert decode_message(encode(m)) == m
    m2 = make_message(MsgKind.PREENDORSE, 0, 1, 1, hash_of(genesis_block), hash_of(v))
    assert decode_message(encode(m2)) == m2
    m3 = make_message(MsgKind.PREENDORSEMENTS, 0, 1, 1, hash_of(genesis_block), pqc)
    assert decode_message(encode(m3)) == m3
    assert decode_qc(encode(pqc)) == pqc


def test_hash_equal_blocks(genesis_block):
    other = make_genesis_block(Genesis(0, GSEED, 2))
    assert hash_of(genesis_block) == hash_of(other)


def test_hash_differs_on_header_round(genesis_block):
    v = Value(0, 1, 1, 1)
    h1 = BlockHeader(1, 1, hash_of(genesis_block), None, 0, None)
    h2 = BlockHeader(1, 2, hash_of(genesis_block), None, 0, None)
    assert hash_of(Block(h1, v)) != hash_of(Block(h2, v))


def test_genesis_identical_across_processes():
    a = make_genesis_block(Genesis(0, GSEED, 2))
    b = make_genesis_block(Genesis(0, GSEED, 2))
    assert a == b and hash_of(a) == hash_of(b)
    assert make_genesis_block(Genesis(0, b"other", 2)) != a


def test_check_qc_accepts_quorum(genesis_block):
    # n=4, f=1: 2f+1 = 3 matching committee votes suffice
    v = Value(0, 1, 1, 1)
    pred = hash_of(genesis_block)
    qc = qc_of(QCKind.ENDORSEMENT, 1, 1, pred, hash_of(v), [0, 1, 2])
    assert check_qc(qc, QCKind.ENDORSEMENT, 1, 1, pred, hash_of(v), (0, 1, 2, 3), 1)


def test_check_qc_rejects_duplicate_signer(genesis_block):
    v = Value(0, 1, 1, 1)
    pred = hash_of(genesis_block)
    d = lambda s: vote_digest(QCKind.ENDORSEMENT, s, 1, 1, pred, hash_of(v))
    votes = (Signature(0, d(0)), Signature(0, d(0)), Signature(1, d(1)))
    qc = make_qc(QCKind.ENDORSEMENT, 1, 1, pred, hash_of(v), votes)
    assert not check_qc(qc, QCKind.ENDORSEMENT, 1, 1, pred, hash_of(v), (0, 1, 2, 3), 1)


def test_check_qc_rejects_outsider(genesis_block):
    v = Value(0, 1, 1, 1)
    pred = hash_of(genesis_block)
    qc = qc_of(QCKind.ENDORSEMENT, 1, 1, pred, hash_of(v), [0, 1, 9])
    assert not check_qc(qc, QCKind.ENDORSEMENT, 1, 1, pred, hash_of(v), (0, 1, 2, 3), 1)


def test_check_qc_rejects_field_mismatch(genesis_block):
    v = Value(0, 1, 1, 1)
    pred = hash_of(genesis_block)
    qc = qc_of(QCKind.ENDORSEMENT, 1, 2, pred, hash_of(v), [0, 1, 2])
    assert not check_qc(qc, QCKind.ENDORSEMENT, 1, 1, pred, hash_of(v), (0, 1, 2, 3), 1)


def test_message_signature_discipline(genesis_block):
    m = make_message(MsgKind.PREENDORSE, 3, 1, 1, hash_of(genesis_block), b"\x02" * 16)
    assert m.sig.signer == m.sender and message_sig_valid(m)
    forged = Signature(2, m.sig.payload_digest)
    assert not message_sig_valid(
        type(m)(m.kind, m.sender, m.level, m.round, m.pred_hash, m.payload, forged))


def test_proposal_block_interconversion(genesis_block):
    v = Value(1, 1, 2, 77)
    payload = ProposePayload(None, v, 0, None)
    m = make_message(MsgKind.PROPOSE, 1, 1, 2, hash_of(genesis_block), payload)
    b = block_from_proposal(m)
    assert b.header.level == 1 and b.header.round == 2 and b.contents == v
    assert proposal_from_block(b) == m
