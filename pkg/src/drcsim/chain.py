"""Blockchain store, committee selection, and chain validity predicates.

A chain is an immutable tuple of blocks, genesis first, one block per level.
Committees are deterministic pseudo-random n-subsets of the universe, keyed by
the genesis seed and the prefix of decided output values; every process with
the same decided prefix computes the same committee.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .core import (
    Block,
    OutputValue,
    ProtocolError,
    QCKind,
    QuorumCertificate,
    check_qc,
    encode,
    hash_of,
)

Chain = tuple[Block, ...]


class InsufficientChain(ProtocolError):
    pass


class LevelMismatch(ProtocolError):
    pass


class HashMismatch(ProtocolError):
    pass


@dataclass(frozen=True)
class CommitteeConfig:
    n: int
    f: int
    lookback: int  # how many levels behind the committee-selecting prefix lags
    universe: tuple[int, ...]
    seed: bytes

    def validate(self) -> None:
        if self.n != 3 * self.f + 1:
            raise ValueError("committee size must be 3f+1")
        if self.lookback < 1:
            raise ValueError("look-back must be >= 1")
        if len(self.universe) < self.n:
            raise ValueError("universe smaller than committee")


def output_value(block: Block) -> OutputValue:
    """The agreed part of a block: contents plus predecessor hash (header
    round and certificates are not part of the decided value)."""
    return OutputValue(block.contents, block.header.pred_hash)


@lru_cache(maxsize=4096)
def committee(prefix: tuple[OutputValue, ...], cfg: CommitteeConfig) -> tuple[int, ...]:
    """Deterministic sequence of n distinct members, seeded by the prefix."""
    key = hashlib.blake2b(cfg.seed + encode(prefix), digest_size=16).digest()
    rng = random.Random(int.from_bytes(key, "big"))
    pool = list(cfg.universe)
    for i in range(cfg.n):  # partial Fisher-Yates: first n slots become the committee
        j = rng.randrange(i, len(pool))
        pool[i], pool[j] = pool[j], pool[i]
    return tuple(pool[: cfg.n])


def committee_at_level(chain: Chain, level: int, cfg: CommitteeConfig) -> tuple[int, ...]:
    if level <= cfg.lookback:
        return committee((output_value(chain[0]),), cfg)
    need = level - cfg.lookback  # blocks up to this level must be decided
    if len(chain) <= need:
        raise InsufficientChain(f"level {level} needs chain through level {need}")
    return committee(tuple(output_value(b) for b in chain[: need + 1]), cfg)


def proposer(chain: Chain, level: int, round: int, cfg: CommitteeConfig) -> int:
    members = committee_at_level(chain, level, cfg)
    return members[(round - 1) % cfg.n]


def is_consistent_value(v: OutputValue, v_prev: OutputValue, prev_block: Block) -> bool:
    # application-content hook defaults to true; only the hash link is checked
    return v.pred_hash == hash_of(prev_block)


def append_decided(chain: Chain, block: Block) -> Chain:
    if block.header.level != len(chain):
        raise LevelMismatch(f"append level {block.header.level} onto length {len(chain)}")
    if block.header.pred_hash != hash_of(chain[-1]):
        raise HashMismatch("predecessor hash does not match current head")
    return chain + (block,)


def valid_chain_reason(chain: Chain, certificate: Optional[QuorumCertificate],
                       cfg: CommitteeConfig) -> Optional[str]:
    """None if the chain plus head certificate is valid, else the first failure."""
    if not chain or chain[0].header.level != 0:
        return "missing genesis"
    head = chain[-1]
    head_level = head.header.level
    if head_level == 0:
        return None if certificate is None else "genesis needs no certificate"
    if certificate is None:
        return "missing head certificate"
    if not check_qc(
        certificate, QCKind.ENDORSEMENT, head_level, head.header.round,
        head.header.pred_hash, hash_of(head.contents),
        committee_at_level(chain, head_level, cfg), cfg.f,
    ):
        return "head certificate does not certify the head"
    for lvl in range(1, len(chain)):
        block, prev = chain[lvl], chain[lvl - 1]
        hdr = block.header
        if hdr.level != lvl:
            return f"level {lvl}: wrong header level"
        if hdr.pred_hash != hash_of(prev):
            return f"level {lvl}: broken hash link"
        if hdr.round < 1:
            return f"level {lvl}: bad round"
        members = committee_at_level(chain, lvl, cfg)
        if hdr.endorsable_round == 0:
            # fresh payload: produced by the proposer of the production round
            if block.contents.creator != members[(hdr.round - 1) % cfg.n]:
                return f"level {lvl}: contents not from the round-{hdr.round} proposer"
        elif block.contents.creator not in members:
            # re-proposed payload keeps its original creator, a committee member
            return f"level {lvl}: contents creator outside the committee"
        if lvl == 1:
            if hdr.endorsement_qc is not None:
                return "level 1: unexpected endorsement QC"
        else:
            if hdr.endorsement_qc is None:
                return f"level {lvl}: missing endorsement QC"
            if not check_qc(
                hdr.endorsement_qc, QCKind.ENDORSEMENT, lvl - 1, prev.header.round,
                prev.header.pred_hash, hash_of(prev.contents),
                committee_at_level(chain, lvl - 1, cfg), cfg.f,
            ):
                return f"level {lvl}: endorsement QC does not certify level {lvl - 1}"
        if (hdr.endorsable_round == 0) != (hdr.preendorsement_qc is None):
            return f"level {lvl}: endorsable round / preendorsement QC mismatch"
        if hdr.preendorsement_qc is not None and not check_qc(
            hdr.preendorsement_qc, QCKind.PREENDORSEMENT, lvl, hdr.endorsable_round,
            hdr.pred_hash, hash_of(block.contents), members, cfg.f,
        ):
            return f"level {lvl}: preendorsement QC does not justify the payload"
    return None


def valid_chain(chain: Chain, certificate: Optional[QuorumCertificate],
                cfg: CommitteeConfig) -> bool:
    return valid_chain_reason(chain, certificate, cfg) is None
