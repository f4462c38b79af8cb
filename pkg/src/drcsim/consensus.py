"""Single-shot consensus: phase actions, message validation and buffering,
endorsable/locked tracking, decision extraction, head comparison.

Operations take the owning process node (duck-typed: pid, level, head_hash,
head_certificate, chain, cfg, instance, committee/proposer lookups) and return
effect lists; they never touch the network directly.

Buffering discipline, which keeps the buffer within 4n+2 at all times:
 * only messages for the current or next round, current level, and current
   head hash are stored;
 * at most one message per (kind, sender, round) -- later ones are dropped;
 * Preendorsements messages are consumed (their QC can promote the endorsable
   state) but never stored: nothing reads them back, and storing them would
   break the 2 + 2n + 2n counting argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .core import (
    MalformedPoc,
    Message,
    MsgKind,
    Phase,
    ProposePayload,
    QCKind,
    QuorumCertificate,
    Value,
    hash_of,
    make_message,
    make_qc,
    message_sig_valid,
)
from .chain import Chain


@dataclass
class InstanceState:
    round: int = 1
    phase: Phase = Phase.PROPOSE
    is_baker: bool = False
    locked_value: Optional[Value] = None
    locked_round: int = 0
    endorsable_value: Optional[Value] = None
    endorsable_round: int = 0
    preendorsement_qc: Optional[QuorumCertificate] = None
    # (kind, sender, round) -> message; insertion-ordered, at most one per key
    messages: dict[tuple[int, int, int], Message] = field(default_factory=dict)


def init_instance() -> InstanceState:
    return InstanceState()


# --- buffer queries ----------------------------------------------------------


def proposal_for(state: InstanceState, rnd: int) -> Optional[Message]:
    for m in state.messages.values():
        if m.kind is MsgKind.PROPOSE and m.round == rnd:
            return m
    return None


def preendorsements_for(state: InstanceState, rnd: int) -> list[Message]:
    return [m for m in state.messages.values()
            if m.kind is MsgKind.PREENDORSE and m.round == rnd]


def endorsements_for(state: InstanceState, rnd: int) -> list[Message]:
    return [m for m in state.messages.values()
            if m.kind is MsgKind.ENDORSE and m.round == rnd]


def filter_messages(state: InstanceState) -> None:
    """Keep only current-round messages; called right after a round increment."""
    state.messages = {k: m for k, m in state.messages.items() if m.round == state.round}


def prune_to_window(state: InstanceState, rnd: int) -> None:
    """Drop anything outside {rnd, rnd+1}; used when re-entering via the
    synchronizer, which may jump several rounds forward at once."""
    state.messages = {k: m for k, m in state.messages.items()
                      if m.round in (rnd, rnd + 1)}


def drop_foreign_head(state: InstanceState, head_hash: bytes) -> None:
    """After a head swap, buffered votes for the abandoned head are useless
    (QCs must match the predecessor hash) and would poison QC assembly."""
    state.messages = {k: m for k, m in state.messages.items()
                      if m.pred_hash == head_hash}


# --- message validation -------------------------------------------------------


def is_valid_message(node, msg: Message) -> bool:
    """Level, hash and round-window are assumed already matched by the caller."""
    if not message_sig_valid(msg):
        return False
    f = node.cfg.f
    members = node.committee_members(msg.level)
    if msg.kind is MsgKind.PROPOSE:
        p = msg.payload
        if not isinstance(p, ProposePayload):
            return False
        if msg.sender != node.proposer_at(msg.level, msg.round):
            return False
        # the endorsement QC must certify this node's own head
        head = node.chain[-1]
        if msg.level == 1:
            if p.endorsement_qc is not None:
                return False
        else:
            if p.endorsement_qc is None or not node.check_qc_cached(
                p.endorsement_qc, QCKind.ENDORSEMENT, msg.level - 1, head.header.round,
                head.header.pred_hash, hash_of(head.contents),
                node.committee_members(msg.level - 1),
            ):
                return False
        if p.endorsable_round == 0:
            if p.preendorsement_qc is not None:
                return False
            # a fresh value must be the proposer's own creation
            if p.value.creator != msg.sender:
                return False
        else:
            # a re-proposed value originates from an earlier legitimate proposer
            if p.value.creator not in members:
                return False
            if p.preendorsement_qc is None or not node.check_qc_cached(
                p.preendorsement_qc, QCKind.PREENDORSEMENT, msg.level,
                p.endorsable_round, node.head_hash, hash_of(p.value), members,
            ):
                return False
        return True
    if msg.kind in (MsgKind.PREENDORSE, MsgKind.ENDORSE):
        if msg.sender not in members or not isinstance(msg.payload, bytes):
            return False
        prop = proposal_for(node.instance, msg.round)
        return prop is not None and msg.payload == hash_of(prop.payload.value)
    if msg.kind is MsgKind.PREENDORSEMENTS:
        qc = msg.payload
        return (
            msg.sender in members
            and isinstance(qc, QuorumCertificate)
            and node.check_qc_cached(
                qc, QCKind.PREENDORSEMENT, msg.level, qc.round,
                node.head_hash, qc.value_hash, members,
            )
        )
    return False


# --- endorsable tracking -------------------------------------------------------


def _assemble_preendorsement_qc(node, rnd: int, value: Value,
                                votes: list[Message]) -> QuorumCertificate:
    return make_qc(QCKind.PREENDORSEMENT, node.level, rnd, node.head_hash,
                   hash_of(value), [m.sig for m in votes])


def _resolve_value(node, value_hash: bytes) -> Optional[Value]:
    """Find the actual value behind a QC's value hash. Votes carry hashes only,
    so a bare QC can be adopted only when the value is locally known."""
    st = node.instance
    for m in st.messages.values():
        if m.kind is MsgKind.PROPOSE and hash_of(m.payload.value) == value_hash:
            return m.payload.value
    if st.locked_value is not None and hash_of(st.locked_value) == value_hash:
        return st.locked_value
    if st.endorsable_value is not None and hash_of(st.endorsable_value) == value_hash:
        return st.endorsable_value
    return None


def update_endorsable(node, msg: Message) -> None:
    st = node.instance
    pre = preendorsements_for(st, st.round)
    if len(pre) >= 2 * node.cfg.f + 1:
        prop = proposal_for(st, st.round)
        if prop is not None:  # guaranteed: votes validate only against a buffered proposal
            value = prop.payload.value
            st.endorsable_value = value
            st.endorsable_round = st.round
            st.preendorsement_qc = _assemble_preendorsement_qc(node, st.round, value, pre)
        return
    if msg.kind is MsgKind.PROPOSE:
        pqc = msg.payload.preendorsement_qc
        if pqc is not None and pqc.round > st.endorsable_round:
            st.endorsable_value = msg.payload.value
            st.endorsable_round = pqc.round
            st.preendorsement_qc = pqc
    elif msg.kind is MsgKind.PREENDORSEMENTS:
        pqc = msg.payload
        if pqc.round > st.endorsable_round:
            value = _resolve_value(node, pqc.value_hash)
            if value is not None:
                st.endorsable_value = value
                st.endorsable_round = pqc.round
                st.preendorsement_qc = pqc


# --- message handling ----------------------------------------------------------


def handle_consensus_message(node, msg: Message) -> tuple[str, bool]:
    """Returns (status, wants_pull) with status in
    {"accepted", "duplicate", "invalid", "ignored"}."""
    st = node.instance
    status = "ignored"
    if (
        msg.level == node.level
        and msg.pred_hash == node.head_hash
        and msg.round in (st.round, st.round + 1)
    ):
        if not is_valid_message(node, msg):
            status = "invalid"
        elif msg.kind is MsgKind.PREENDORSEMENTS:
            update_endorsable(node, msg)
            status = "accepted"
        else:
            key = (int(msg.kind), msg.sender, msg.round)
            if key not in st.messages:
                st.messages[key] = msg
                update_endorsable(node, msg)
                status = "accepted"
            else:
                status = "duplicate"  # a second message for the slot replaces nothing
    wants_pull = (msg.level == node.level and msg.pred_hash != node.head_hash) \
        or msg.level > node.level
    return status, wants_pull


# --- phase entry actions ---------------------------------------------------------


def propose_phase(node) -> list[Message]:
    st = node.instance
    if node.proposer_at(node.level, st.round) != node.pid:
        return []
    if st.endorsable_value is not None:
        value, er, pqc = st.endorsable_value, st.endorsable_round, st.preendorsement_qc
    else:
        value, er, pqc = node.new_value(), 0, None
    payload = ProposePayload(node.head_certificate, value, er, pqc)
    return [make_message(MsgKind.PROPOSE, node.pid, node.level, st.round,
                         node.head_hash, payload)]


def preendorse_phase(node) -> list[Message]:
    st = node.instance
    prop = proposal_for(st, st.round)
    if prop is not None:
        value = prop.payload.value
        er = prop.payload.endorsable_round
        if st.locked_value == value or st.locked_round < er < st.round or st.locked_round == 0:
            return [make_message(MsgKind.PREENDORSE, node.pid, node.level, st.round,
                                 node.head_hash, hash_of(value))]
    if st.locked_value is not None and st.preendorsement_qc is not None:
        # cannot preendorse: justify the refusal with the QC behind the lock
        return [make_message(MsgKind.PREENDORSEMENTS, node.pid, node.level, st.round,
                             node.head_hash, st.preendorsement_qc)]
    return []


def endorse_phase(node) -> list[Message]:
    st = node.instance
    pre = preendorsements_for(st, st.round)
    if len(pre) < 2 * node.cfg.f + 1:
        return []
    prop = proposal_for(st, st.round)
    if prop is None:
        return []
    value = prop.payload.value
    # re-run the direct endorsable update: the quorum may have been assembled
    # from next-round messages that never went through update_endorsable
    st.endorsable_value = value
    st.endorsable_round = st.round
    st.preendorsement_qc = _assemble_preendorsement_qc(node, st.round, value, pre)
    st.locked_value = value
    st.locked_round = st.round
    endorse = make_message(MsgKind.ENDORSE, node.pid, node.level, st.round,
                           node.head_hash, hash_of(value))
    rebroadcast = make_message(MsgKind.PREENDORSEMENTS, node.pid, node.level, st.round,
                               node.head_hash, st.preendorsement_qc)
    return [endorse, rebroadcast]


_ENTRY = {Phase.PROPOSE: propose_phase, Phase.PREENDORSE: preendorse_phase,
          Phase.ENDORSE: endorse_phase}


def enter_phase(node, phase: Phase) -> list[Message]:
    """Baker entry action; observers follow the same timing but stay silent."""
    if not node.instance.is_baker:
        return []
    return _ENTRY[phase](node)


# --- decision and head comparison --------------------------------------------------


def get_decision(node):
    from .core import block_from_proposal  # local import to avoid cycle noise

    st = node.instance
    ends = endorsements_for(st, st.round)
    if len(ends) < 2 * node.cfg.f + 1:
        return None
    prop = proposal_for(st, st.round)
    if prop is None:
        return None
    qc = make_qc(QCKind.ENDORSEMENT, node.level, st.round, node.head_hash,
                 hash_of(prop.payload.value), [m.sig for m in ends])
    return block_from_proposal(prop), qc


Poc = Union[Message, QuorumCertificate, None]


def get_certificate(poc: Poc) -> Optional[QuorumCertificate]:
    if isinstance(poc, Message):
        if poc.kind is not MsgKind.PROPOSE or not isinstance(poc.payload, ProposePayload):
            raise MalformedPoc("head justification must be a proposal or a certificate")
        eqc = poc.payload.endorsement_qc
        if eqc is None:
            if poc.level >= 2:
                raise MalformedPoc("proposal above level 1 lacks its endorsement QC")
            return None
        return eqc
    return poc


def better_head(node, incoming: Chain, poc: Poc) -> bool:
    """Same-level head comparison: prefer heads decided at earlier rounds, but
    never abandon a head we hold endorsable state for (unless the incoming
    proposal supersedes it)."""
    st = node.instance
    incoming_round = incoming[-1].header.round
    own_round = node.chain[-1].header.round
    if isinstance(poc, Message) and poc.kind is MsgKind.PROPOSE:
        er = poc.payload.endorsable_round
        return st.endorsable_round < er or (
            st.endorsable_round == er and incoming_round < own_round
        )
    return st.endorsable_round == 0 and incoming_round < own_round
