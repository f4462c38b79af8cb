"""Event-driven node state machine: one consensus instance per level, paced by
phase timers, with chain adoption and head swaps driven by pull responses.

The complete surface is ``start_node`` plus ``apply(node, event, local_time)``;
both return effect lists that the caller (simulator or test) interprets.
A node never blocks: the pseudo-blocking "wait until not ahead" of the round
synchronizer is realized as a retry timer at the next local round boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from . import consensus
from .chain import Chain, CommitteeConfig, append_decided, committee_at_level, valid_chain
from .consensus import InstanceState, Poc, init_instance
from .core import (
    Block,
    Genesis,
    MalformedPoc,
    Message,
    MsgKind,
    Phase,
    QuorumCertificate,
    Value,
    check_qc,
    hash_of,
    make_genesis_block,
)
from .synchro import ClockBeforeLevelStart, DurationFn, get_next_phase, synchronize

# --- input events ------------------------------------------------------------


@dataclass(frozen=True)
class TimerFired:
    timer_id: int


@dataclass(frozen=True)
class NewMessage:
    msg: Message


@dataclass(frozen=True)
class NewChain:
    chain: Chain
    poc: Poc


@dataclass(frozen=True)
class PullRequestFrom:
    peer: int


InputEvent = Union[TimerFired, NewMessage, NewChain, PullRequestFrom]

# --- effects -------------------------------------------------------------------


@dataclass(frozen=True)
class Broadcast:
    msg: Message


@dataclass(frozen=True)
class SendChain:
    to: int
    chain: Chain
    poc: Poc


@dataclass(frozen=True)
class PullRequest:
    pass


@dataclass(frozen=True)
class ScheduleTimer:
    timer_id: int
    kind: str  # "phase" | "pull" | "retry"
    delay: int


@dataclass(frozen=True)
class Decide:
    block: Block
    qc: QuorumCertificate


@dataclass(frozen=True)
class RoundEntered:
    level: int
    round: int
    round_offset: int
    phase: Phase
    phase_offset: int


@dataclass(frozen=True)
class HeadSwapped:
    level: int
    old_round: int
    new_round: int


@dataclass(frozen=True)
class Rejected:
    reason: str


Effect = Union[Broadcast, SendChain, PullRequest, ScheduleTimer, Decide,
               RoundEntered, HeadSwapped, Rejected]


class ProcessNode:
    """Per-process protocol state; advanced strictly one event at a time."""

    def __init__(self, pid: int, genesis: Genesis, cfg: CommitteeConfig,
                 duration: DurationFn, pull_interval: int):
        self.pid = pid
        self.genesis = genesis
        self.cfg = cfg
        self.duration = duration
        self.pull_interval = pull_interval
        self.chain: Chain = (make_genesis_block(genesis),)
        self.head_certificate: Optional[QuorumCertificate] = None
        self.instance: InstanceState = init_instance()
        self.pending: dict[int, str] = {}  # live timer id -> kind
        self._timer_seq = 0
        self._nonce = 0
        self._committees: dict[int, tuple[int, ...]] = {}
        self._qc_cache: dict = {}
        self._chain_cache: dict = {}

    # -- views ------------------------------------------------------------

    @property
    def level(self) -> int:
        return len(self.chain)

    @property
    def head_hash(self) -> bytes:
        return hash_of(self.chain[-1])

    def committee_members(self, level: int) -> tuple[int, ...]:
        # output values below a level never change (agreement), so the cache
        # survives head swaps and chain adoptions
        got = self._committees.get(level)
        if got is None:
            got = committee_at_level(self.chain, level, self.cfg)
            self._committees[level] = got
        return got

    def proposer_at(self, level: int, rnd: int) -> int:
        return self.committee_members(level)[(rnd - 1) % self.cfg.n]

    def new_value(self) -> Value:
        self._nonce += 1
        return Value(self.pid, self.level, self.instance.round, self._nonce)

    def check_qc_cached(self, qc, kind, level, rnd, pred_hash, value_hash, members) -> bool:
        key = (qc, kind, level, rnd, pred_hash, value_hash, members)
        got = self._qc_cache.get(key)
        if got is None:
            got = check_qc(qc, kind, level, rnd, pred_hash, value_hash, members, self.cfg.f)
            self._qc_cache[key] = got
        return got

    def _valid_chain_cached(self, chain: Chain, cert: Optional[QuorumCertificate]) -> bool:
        # under the perfect-hash model the head digest pins the whole chain
        key = (hash_of(chain[-1]), cert)
        got = self._chain_cache.get(key)
        if got is None:
            got = valid_chain(chain, cert, self.cfg)
            self._chain_cache[key] = got
        return got

    def _new_timer(self, kind: str) -> int:
        self._timer_seq += 1
        self.pending[self._timer_seq] = kind
        return self._timer_seq

    def _cancel(self, kinds: tuple[str, ...]) -> None:
        self.pending = {i: k for i, k in self.pending.items() if k not in kinds}


# --- transitions ------------------------------------------------------------------


def start_node(node: ProcessNode, local_time: int) -> list[Effect]:
    effects: list[Effect] = [
        ScheduleTimer(node._new_timer("pull"), "pull", node.pull_interval)
    ]
    effects += enter_instance(node, local_time)
    return effects


def enter_instance(node: ProcessNode, local_time: int) -> list[Effect]:
    """(Re)synchronize and enter the phase the clock says we should be in."""
    node._cancel(("phase", "retry"))
    try:
        sync = synchronize(node.chain, local_time, node.duration, node.genesis.t0)
    except ClockBeforeLevelStart as e:
        delay = e.level_start - local_time
        return [ScheduleTimer(node._new_timer("retry"), "retry", delay)]
    st = node.instance
    if st.round > sync.round:
        # ahead of the clock: idle until the next round boundary and re-check
        delay = node.duration.round_duration(sync.round) - sync.round_offset
        return [ScheduleTimer(node._new_timer("retry"), "retry", delay)]
    pos = get_next_phase(sync.round, sync.round_offset, node.duration)
    consensus.prune_to_window(st, sync.round)
    st.round = sync.round
    st.phase = pos.phase
    st.is_baker = node.pid in node.committee_members(node.level)
    effects: list[Effect] = [
        RoundEntered(node.level, sync.round, sync.round_offset, pos.phase, pos.phase_offset),
        ScheduleTimer(node._new_timer("phase"), "phase",
                      node.duration.phase_duration(sync.round) - pos.phase_offset),
    ]
    effects += [Broadcast(m) for m in consensus.enter_phase(node, pos.phase)]
    return effects


def on_phase_end(node: ProcessNode, local_time: int) -> list[Effect]:
    st = node.instance
    if st.phase is not Phase.ENDORSE:
        st.phase = Phase(st.phase.value + 1)
        effects: list[Effect] = [
            ScheduleTimer(node._new_timer("phase"), "phase",
                          node.duration.phase_duration(st.round))
        ]
        effects += [Broadcast(m) for m in consensus.enter_phase(node, st.phase)]
        return effects
    decision = consensus.get_decision(node)
    if decision is not None:
        block, qc = decision
        node.chain = append_decided(node.chain, block)
        node.head_certificate = qc
        node.instance = init_instance()
        return [Decide(block, qc)] + enter_instance(node, local_time)
    st.round += 1
    consensus.filter_messages(st)
    return enter_instance(node, local_time)


def on_new_chain(node: ProcessNode, incoming: Chain, poc: Poc,
                 local_time: int) -> list[Effect]:
    if poc is None or not incoming:
        return []
    try:
        cert = consensus.get_certificate(poc)
    except MalformedPoc:
        return [Rejected("malformed-poc")]
    effects: list[Effect] = []
    length = len(incoming)
    if length == node.level:
        # cheap checks first: only validate chains we would actually adopt
        if consensus.better_head(node, incoming, poc):
            if node._valid_chain_cached(incoming, cert):
                old_round = node.chain[-1].header.round
                node.chain = incoming
                node.head_certificate = cert
                consensus.drop_foreign_head(node.instance, node.head_hash)
                # the instance continues unabated: round, phase and locks stay
                effects.append(HeadSwapped(node.level, old_round,
                                           incoming[-1].header.round))
            else:
                effects.append(Rejected("invalid-chain"))
    elif length > node.level:
        if not node._valid_chain_cached(incoming, cert):
            return [Rejected("invalid-chain")]
        node.chain = incoming
        node.head_certificate = cert
        node.instance = init_instance()
        effects += enter_instance(node, local_time)
    # the answer's proposal is an ordinary Propose: hand it to the instance so
    # a process that just caught up can join the round already in flight
    if isinstance(poc, Message) and poc.kind is MsgKind.PROPOSE:
        status, wants_pull = consensus.handle_consensus_message(node, poc)
        if wants_pull:
            effects.append(PullRequest())
    return effects


def answer_pull(node: ProcessNode, peer: int) -> list[Effect]:
    proposal = None
    for m in node.instance.messages.values():
        if m.kind is MsgKind.PROPOSE and (proposal is None or m.round > proposal.round):
            proposal = m  # highest-round buffered proposal is "the current" one
    poc: Poc = proposal if proposal is not None else node.head_certificate
    return [SendChain(peer, node.chain, poc)]


def apply(node: ProcessNode, event: InputEvent, local_time: int) -> list[Effect]:
    if isinstance(event, TimerFired):
        kind = node.pending.pop(event.timer_id, None)
        if kind is None:
            return []  # cancelled
        if kind == "pull":
            return [
                PullRequest(),
                ScheduleTimer(node._new_timer("pull"), "pull", node.pull_interval),
            ]
        if kind == "retry":
            return enter_instance(node, local_time)
        return on_phase_end(node, local_time)
    if isinstance(event, NewMessage):
        status, wants_pull = consensus.handle_consensus_message(node, event.msg)
        effects: list[Effect] = []
        if status == "invalid":
            effects.append(Rejected("invalid-message"))
        if wants_pull:
            effects.append(PullRequest())
        return effects
    if isinstance(event, NewChain):
        return on_new_chain(node, event.chain, event.poc, local_time)
    if isinstance(event, PullRequestFrom):
        return answer_pull(node, event.peer)
    raise TypeError(f"unknown event {event!r}")
