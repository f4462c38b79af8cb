"""Single-shot consensus: buffering rules, phase actions, decisions, locks."""

import pytest

from drcsim import consensus
from drcsim.consensus import (
    better_head,
    endorse_phase,
    filter_messages,
    get_certificate,
    get_decision,
    handle_consensus_message,
    init_instance,
    is_valid_message,
    preendorse_phase,
    propose_phase,
    update_endorsable,
)
from drcsim.core import (
    Block,
    BlockHeader,
    MalformedPoc,
    MsgKind,
    ProposePayload,
    QCKind,
    Value,
    hash_of,
    make_message,
)

from conftest import make_node, proposal_at, qc_of, vote_msg


def buffered(node, msg):
    status, _ = handle_consensus_message(node, msg)
    return status


def quorum_preendorsed(node, rnd=1):
    """Drive a node into a state with a proposal plus 2f+1 preendorsements."""
    prop = proposal_at(node, rnd)
    assert buffered(node, prop) == "accepted"
    members = node.committee_members(node.level)
    for s in members[: 2 * node.cfg.f + 1]:
        m = vote_msg(MsgKind.PREENDORSE, s, node.level, rnd, node.head_hash,
                     prop.payload.value)
        assert buffered(node, m) == "accepted"
    return prop


def test_init_instance_is_canonical():
    st = init_instance()
    assert st.round == 1 and st.locked_round == 0 and st.endorsable_round == 0
    assert st.locked_value is None and st.endorsable_value is None
    assert st.preendorsement_qc is None and not st.messages
    assert init_instance() == init_instance()


def test_fresh_instance_has_no_decision():
    node = make_node()
    assert get_decision(node) is None


def test_valid_preendorse_buffered_after_proposal():
    node = make_node()
    prop = proposal_at(node)
    assert buffered(node, prop) == "accepted"
    voter = node.committee_members(1)[0]
    m = vote_msg(MsgKind.PREENDORSE, voter, 1, 1, node.head_hash, prop.payload.value)
    assert buffered(node, m) == "accepted"
    assert len(node.instance.messages) == 2


def test_preendorse_before_proposal_is_invalid():
    node = make_node()
    voter = node.committee_members(1)[0]
    m = vote_msg(MsgKind.PREENDORSE, voter, 1, 1, node.head_hash, Value(0, 1, 1, 5))
    assert buffered(node, m) == "invalid"


def test_next_round_message_kept():
    node = make_node()
    prop = proposal_at(node, rnd=2)  # clock-drift tolerance: round rp+1
    assert buffered(node, prop) == "accepted"


def test_out_of_window_round_dropped():
    node = make_node()
    prop = proposal_at(node, rnd=3)
    assert buffered(node, prop) == "ignored"


def test_future_level_triggers_pull():
    node = make_node()
    m = make_message(MsgKind.PREENDORSE, 1, node.level + 3, 1, node.head_hash,
                     b"\x03" * 16)
    status, wants_pull = handle_consensus_message(node, m)
    assert status == "ignored" and wants_pull


def test_foreign_head_triggers_pull():
    node = make_node()
    m = make_message(MsgKind.PREENDORSE, 1, node.level, 1, b"\x04" * 16, b"\x03" * 16)
    status, wants_pull = handle_consensus_message(node, m)
    assert status == "ignored" and wants_pull


def test_duplicate_slot_dropped():
    node = make_node()
    prop = proposal_at(node)
    assert buffered(node, prop) == "accepted"
    # an equivocating second proposal for the same round replaces nothing
    other = proposal_at(node, value=Value(prop.sender, 1, 1, 999))
    assert buffered(node, other) == "duplicate"
    assert node.instance.messages[(int(MsgKind.PROPOSE), prop.sender, 1)] == prop


def test_propose_from_wrong_slot_invalid():
    node = make_node()
    members = node.committee_members(1)
    wrong = next(p for p in members if p != node.proposer_at(1, 1))
    value = Value(wrong, 1, 1, 5)
    m = make_message(MsgKind.PROPOSE, wrong, 1, 1, node.head_hash,
                     ProposePayload(None, value, 0, None))
    assert not is_valid_message(node, m)


def test_propose_er_pqc_mismatch_invalid():
    node = make_node()
    sender = node.proposer_at(1, 3)
    value = Value(sender, 1, 1, 5)
    pqc = qc_of(QCKind.PREENDORSEMENT, 1, 1, node.head_hash, hash_of(value),
                node.committee_members(1)[:3])
    payload = ProposePayload(None, value, 2, pqc)  # eR=2 but pQC.round=1
    m = make_message(MsgKind.PROPOSE, sender, 1, 3, node.head_hash, payload)
    node.instance.round = 3
    assert not is_valid_message(node, m)


def test_update_endorsable_direct_quorum():
    node = make_node()
    quorum_preendorsed(node)
    st = node.instance
    assert st.endorsable_round == 1
    assert st.preendorsement_qc is not None
    assert st.preendorsement_qc.round == 1
    assert len(st.preendorsement_qc.votes) >= 2 * node.cfg.f + 1


def test_update_endorsable_indirect_from_preendorsements():
    node = make_node()
    node.instance.round = 4
    members = node.committee_members(1)
    value = Value(members[0], 1, 1, 5)
    node.instance.locked_value = value  # value known locally, so adoptable
    node.instance.locked_round = 1
    node.instance.endorsable_value = value
    node.instance.endorsable_round = 1
    node.instance.preendorsement_qc = qc_of(
        QCKind.PREENDORSEMENT, 1, 1, node.head_hash, hash_of(value), members[:3])
    pqc3 = qc_of(QCKind.PREENDORSEMENT, 1, 3, node.head_hash, hash_of(value), members[:3])
    m = make_message(MsgKind.PREENDORSEMENTS, members[1], 1, 4, node.head_hash, pqc3)
    assert buffered(node, m) == "accepted"
    assert node.instance.endorsable_round == 3
    assert node.instance.preendorsement_qc == pqc3


def test_update_endorsable_ignores_lower_round():
    node = make_node()
    node.instance.round = 3
    members = node.committee_members(1)
    value = Value(members[0], 1, 1, 5)
    node.instance.endorsable_value = value
    node.instance.endorsable_round = 2
    pqc1 = qc_of(QCKind.PREENDORSEMENT, 1, 1, node.head_hash, hash_of(value), members[:3])
    m = make_message(MsgKind.PREENDORSEMENTS, members[1], 1, 3, node.head_hash, pqc1)
    handle_consensus_message(node, m)
    assert node.instance.endorsable_round == 2


def test_filter_messages_keeps_current_round():
    node = make_node()
    node.instance.round = 3
    p3 = proposal_at(node, rnd=3)
    p4 = proposal_at(node, rnd=4)
    assert buffered(node, p3) == "accepted"
    assert buffered(node, p4) == "accepted"
    node.instance.round = 4
    filter_messages(node.instance)
    assert all(m.round == 4 for m in node.instance.messages.values())
    assert len(node.instance.messages) == 1


def test_filter_messages_post_bound():
    # after filtering, one round remains: at most 1 proposal + n + n votes
    node = make_node()
    n = node.cfg.n
    prop = proposal_at(node)
    buffered(node, prop)
    for s in node.committee_members(1):
        buffered(node, vote_msg(MsgKind.PREENDORSE, s, 1, 1, node.head_hash,
                                prop.payload.value))
        buffered(node, vote_msg(MsgKind.ENDORSE, s, 1, 1, node.head_hash,
                                prop.payload.value))
    filter_messages(node.instance)
    assert len(node.instance.messages) <= 2 * n + 1


def test_propose_phase_fresh_value():
    node = make_node()
    node.instance.is_baker = True
    pid = node.proposer_at(1, 1)
    node.pid = pid
    msgs = propose_phase(node)
    assert len(msgs) == 1
    payload = msgs[0].payload
    assert payload.endorsable_round == 0 and payload.preendorsement_qc is None
    assert payload.value.creator == pid


def test_propose_phase_reproposes_endorsable():
    node = make_node()
    node.pid = node.proposer_at(1, 1)
    node.instance.is_baker = True
    members = node.committee_members(1)
    value = Value(members[2], 1, 1, 8)
    pqc = qc_of(QCKind.PREENDORSEMENT, 1, 1, node.head_hash, hash_of(value), members[:3])
    node.instance.endorsable_value = value
    node.instance.endorsable_round = 1
    node.instance.preendorsement_qc = pqc
    msgs = propose_phase(node)
    assert msgs[0].payload.value == value
    assert msgs[0].payload.endorsable_round == 1
    assert msgs[0].payload.preendorsement_qc == pqc


def test_propose_phase_non_proposer_silent():
    node = make_node()
    node.instance.is_baker = True
    node.pid = next(p for p in node.committee_members(1)
                    if p != node.proposer_at(1, 1))
    assert propose_phase(node) == []


def test_preendorse_unlocked_on_fresh_proposal():
    node = make_node(pid=1)
    node.instance.is_baker = True
    buffered(node, proposal_at(node))
    msgs = preendorse_phase(node)
    assert len(msgs) == 1 and msgs[0].kind is MsgKind.PREENDORSE


def test_preendorse_refusal_sends_lock_justification():
    node = make_node(pid=1)
    node.instance.is_baker = True
    node.instance.round = 4
    members = node.committee_members(1)
    locked = Value(members[0], 1, 3, 9)
    pqc = qc_of(QCKind.PREENDORSEMENT, 1, 3, node.head_hash, hash_of(locked), members[:3])
    node.instance.locked_value = locked
    node.instance.locked_round = 3
    node.instance.endorsable_value = locked
    node.instance.endorsable_round = 3
    node.instance.preendorsement_qc = pqc
    # incoming proposal justified only at round 2 < locked round 3
    other = Value(members[1], 1, 2, 10)
    pqc2 = qc_of(QCKind.PREENDORSEMENT, 1, 2, node.head_hash, hash_of(other), members[:3])
    buffered(node, proposal_at(node, rnd=4, value=other, er=2, pqc=pqc2))
    msgs = preendorse_phase(node)
    assert len(msgs) == 1 and msgs[0].kind is MsgKind.PREENDORSEMENTS
    assert msgs[0].payload == pqc


def test_preendorse_locked_on_same_value():
    node = make_node(pid=1)
    node.instance.is_baker = True
    node.instance.round = 3
    members = node.committee_members(1)
    value = Value(members[0], 1, 1, 9)
    pqc = qc_of(QCKind.PREENDORSEMENT, 1, 2, node.head_hash, hash_of(value), members[:3])
    node.instance.locked_value = value
    node.instance.locked_round = 2
    node.instance.endorsable_value = value
    node.instance.endorsable_round = 2
    node.instance.preendorsement_qc = pqc
    buffered(node, proposal_at(node, rnd=3, value=value, er=2, pqc=pqc))
    msgs = preendorse_phase(node)
    assert len(msgs) == 1 and msgs[0].kind is MsgKind.PREENDORSE


def test_endorse_phase_locks_and_rebroadcasts():
    node = make_node(pid=1)
    node.instance.is_baker = True
    prop = quorum_preendorsed(node)
    msgs = endorse_phase(node)
    kinds = [m.kind for m in msgs]
    assert kinds == [MsgKind.ENDORSE, MsgKind.PREENDORSEMENTS]
    assert node.instance.locked_value == prop.payload.value
    assert node.instance.locked_round == 1


def test_endorse_phase_needs_quorum():
    node = make_node(pid=1)
    node.instance.is_baker = True
    prop = proposal_at(node)
    buffered(node, prop)
    for s in node.committee_members(1)[: 2 * node.cfg.f]:  # one short
        buffered(node, vote_msg(MsgKind.PREENDORSE, s, 1, 1, node.head_hash,
                                prop.payload.value))
    assert endorse_phase(node) == []
    assert node.instance.locked_round == 0


def test_get_decision_with_quorum():
    node = make_node()
    prop = quorum_preendorsed(node)
    for s in node.committee_members(1)[:3]:
        buffered(node, vote_msg(MsgKind.ENDORSE, s, 1, 1, node.head_hash,
                                prop.payload.value))
    decision = get_decision(node)
    assert decision is not None
    block, qc = decision
    assert block.contents == prop.payload.value
    assert qc.kind is QCKind.ENDORSEMENT and len(qc.votes) == 3


def test_get_decision_restricted_to_current_round():
    node = make_node()
    prop2 = proposal_at(node, rnd=2)
    buffered(node, prop2)
    for s in node.committee_members(1)[:3]:
        buffered(node, vote_msg(MsgKind.ENDORSE, s, 1, 2, node.head_hash,
                                prop2.payload.value))
    assert get_decision(node) is None  # quorum is for round rp+1, not rp


def test_better_head_certificate_case(genesis_block):
    node = make_node()
    node.chain = node.chain[:1]
    # own head at round 3 vs incoming head at round 2
    own = Block(BlockHeader(1, 3, node.head_hash, None, 0, None), Value(0, 1, 3, 1))
    incoming_b = Block(BlockHeader(1, 2, hash_of(genesis_block), None, 0, None),
                       Value(0, 1, 2, 1))
    node.chain = (genesis_block, own)
    incoming = (genesis_block, incoming_b)
    cert = qc_of(QCKind.ENDORSEMENT, 1, 2, hash_of(genesis_block),
                 hash_of(incoming_b.contents), (0, 1, 2))
    assert better_head(node, incoming, cert)
    node.instance.endorsable_round = 2
    assert not better_head(node, incoming, cert)


def test_better_head_proposal_case(genesis_block):
    node = make_node()
    node.instance.endorsable_round = 1
    prop = proposal_at(node, rnd=2, er=2,
                       pqc=qc_of(QCKind.PREENDORSEMENT, 1, 2, node.head_hash,
                                 hash_of(Value(0, 1, 2, 3)),
                                 node.committee_members(1)[:3]))
    assert better_head(node, node.chain, prop)  # endorsableRound 1 < eR 2


def test_get_certificate():
    node = make_node()
    members = node.committee_members(1)
    eqc = qc_of(QCKind.ENDORSEMENT, 1, 1, node.head_hash, b"\x05" * 16, members[:3])
    value = Value(members[0], 2, 1, 1)
    m = make_message(MsgKind.PROPOSE, members[0], 2, 1, b"\x06" * 16,
                     ProposePayload(eqc, value, 0, None))
    assert get_certificate(m) == eqc
    assert get_certificate(eqc) == eqc
    bare = make_message(MsgKind.PROPOSE, members[0], 2, 1, b"\x06" * 16,
                        ProposePayload(None, value, 0, None))
    with pytest.raises(MalformedPoc):
        get_certificate(bare)
