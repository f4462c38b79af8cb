"""Deterministic discrete-event network simulator.

Virtual time is integer microseconds. Each process has a local clock with a
bounded constant skew after GST and a piecewise-constant error (resampled at
most once) before it; timers measure intervals exactly. Channels deliver
within (0, delta] after GST; before GST they drop with a configurable
probability and otherwise deliver with a delay of up to 10*delta.

The whole run, including every random draw, is a pure function of the config
(seed included): re-running a config yields a byte-identical trace.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Optional

from . import trace as tr
from .chain import Chain, CommitteeConfig, committee_at_level
from .consensus import Poc
from .core import (
    Block,
    Genesis,
    Message,
    MsgKind,
    ProposePayload,
    QuorumCertificate,
    Signature,
    Value,
    hash_of,
    make_message,
    message_sig_valid,
    reset_digest_registry,
)
from .driver import (
    Broadcast,
    Decide,
    HeadSwapped,
    NewChain,
    NewMessage,
    ProcessNode,
    PullRequest,
    PullRequestFrom,
    Rejected,
    RoundEntered,
    ScheduleTimer,
    SendChain,
    TimerFired,
    apply,
    start_node,
)
from .synchro import DurationFn


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class SimConfig:
    seed: int
    gst: int
    delta: int
    rho: int
    delta_err: int
    loss_rate: float
    horizon: int
    n: int
    f: int
    lookback: int
    universe: tuple[int, ...]
    byzantine: tuple[tuple[int, str], ...]  # (pid, strategy name)
    laggards: tuple[int, ...]  # fully isolated before GST
    duration: DurationFn
    pull_interval: int
    t0: int
    genesis_seed: bytes
    target_level: int
    name: str = "run"
    check_crypto: bool = True

    def validate(self) -> None:
        try:
            CommitteeConfig(self.n, self.f, self.lookback, self.universe,
                            self.genesis_seed).validate()
            self.duration.validate(self.rho)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if self.delta <= 0 or self.gst < 0 or self.horizon <= 0:
            raise ConfigError("delta, GST and horizon must be positive")
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ConfigError("loss rate must be a probability")
        if self.pull_interval <= 0:
            raise ConfigError("pull interval must be positive")
        ids = set(self.universe)
        byz = {p for p, _ in self.byzantine}
        if len(byz) != len(self.byzantine) or not byz <= ids:
            raise ConfigError("byzantine ids must be distinct universe members")
        for p, strat in self.byzantine:
            if strat not in STRATEGIES:
                raise ConfigError(f"unknown byzantine strategy {strat!r}")
        if not set(self.laggards) <= ids:
            raise ConfigError("laggard ids must be universe members")
        if self.target_level < 1:
            raise ConfigError("target level must be >= 1")

    def committee_config(self) -> CommitteeConfig:
        return CommitteeConfig(self.n, self.f, self.lookback, self.universe,
                               self.genesis_seed)

    def header(self) -> dict:
        return {
            "schema": tr.SCHEMA,
            "name": self.name,
            "seed": self.seed,
            "gst": self.gst,
            "delta": self.delta,
            "rho": self.rho,
            "delta_err": self.delta_err,
            "loss_rate": self.loss_rate,
            "horizon": self.horizon,
            "n": self.n,
            "f": self.f,
            "lookback": self.lookback,
            "universe": list(self.universe),
            "byzantine": [list(b) for b in self.byzantine],
            "laggards": list(self.laggards),
            "duration": [self.duration.base, self.duration.growth,
                         self.duration.cap_round, self.duration.lin_step],
            "pull_interval": self.pull_interval,
            "t0": self.t0,
            "genesis_seed": self.genesis_seed.hex(),
            "target_level": self.target_level,
        }


def config_from_header(h: dict) -> SimConfig:
    return SimConfig(
        seed=h["seed"], gst=h["gst"], delta=h["delta"], rho=h["rho"],
        delta_err=h["delta_err"], loss_rate=h["loss_rate"], horizon=h["horizon"],
        n=h["n"], f=h["f"], lookback=h["lookback"], universe=tuple(h["universe"]),
        byzantine=tuple((p, s) for p, s in h["byzantine"]),
        laggards=tuple(h["laggards"]),
        duration=DurationFn(*h["duration"]),
        pull_interval=h["pull_interval"], t0=h["t0"],
        genesis_seed=bytes.fromhex(h["genesis_seed"]),
        target_level=h["target_level"], name=h.get("name", "run"),
    )


def _derive(seed: int, label: str) -> int:
    material = seed.to_bytes(8, "big", signed=False) + label.encode()
    return int.from_bytes(hashlib.blake2b(material, digest_size=8).digest(), "big")


# --- Byzantine strategies ------------------------------------------------------


@dataclass(frozen=True)
class SendTo:
    to: int
    msg: Message


class Strategy:
    """Arbitrary event->effects behavior, restricted to signing as itself."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.nonce = 1 << 40  # clear of honest nonce counters

    def next_nonce(self) -> int:
        self.nonce += 1
        return self.nonce

    def transform(self, node: ProcessNode, event, effects: list) -> list:
        return effects


class Silent(Strategy):
    def transform(self, node, event, effects):
        return [e for e in effects
                if not isinstance(e, (Broadcast, SendChain, SendTo, PullRequest))]


class Equivocator(Strategy):
    """As proposer, sends two different proposals to disjoint halves."""

    def transform(self, node, event, effects):
        out = []
        for e in effects:
            if isinstance(e, Broadcast) and e.msg.kind is MsgKind.PROPOSE:
                m1 = e.msg
                alt = Value(node.pid, m1.level, m1.round, self.next_nonce())
                pay = ProposePayload(m1.payload.endorsement_qc, alt, 0, None)
                m2 = make_message(MsgKind.PROPOSE, node.pid, m1.level, m1.round,
                                  m1.pred_hash, pay)
                uni = node.cfg.universe
                out += [SendTo(q, m1) for q in uni[::2]]
                out += [SendTo(q, m2) for q in uni[1::2]]
            else:
                out.append(e)
        return out


class DoubleVoter(Strategy):
    """(Pre)endorses a second, conflicting value every time it votes."""

    def transform(self, node, event, effects):
        out = []
        for e in effects:
            out.append(e)
            if isinstance(e, Broadcast) and e.msg.kind in (MsgKind.PREENDORSE,
                                                           MsgKind.ENDORSE):
                m = e.msg
                fake = hash_of(Value(node.pid, m.level, m.round, self.next_nonce()))
                out.append(Broadcast(make_message(m.kind, node.pid, m.level,
                                                  m.round, m.pred_hash, fake)))
        return out


class StaleSpammer(Strategy):
    """Replays its own old-round messages at every timer expiry."""

    def __init__(self, rng):
        super().__init__(rng)
        self.history: list[Message] = []

    def transform(self, node, event, effects):
        out = list(effects)
        if isinstance(event, TimerFired):
            stale = [m for m in self.history if m.round < node.instance.round]
            out += [Broadcast(m) for m in stale[-4:]]
        for e in effects:
            if isinstance(e, Broadcast):
                self.history.append(e.msg)
                del self.history[:-8]
        return out


class FutureLiar(Strategy):
    """Advertises a fictitious higher level to trigger pulls; answers pulls
    with a chain extended by a block whose decision it cannot justify."""

    def _fake_extension(self, node):
        from .core import BlockHeader

        head = node.chain[-1]
        level = len(node.chain)
        header = BlockHeader(level, 1, hash_of(head), node.head_certificate,
                             0, None)
        block = Block(header, Value(node.pid, level, 1, self.next_nonce()))
        return node.chain + (block,)

    def transform(self, node, event, effects):
        out = []
        for e in effects:
            if isinstance(e, SendChain) and node.head_certificate is not None:
                out.append(SendChain(e.to, self._fake_extension(node),
                                     node.head_certificate))
            else:
                out.append(e)
        if isinstance(event, TimerFired):
            junk = Value(node.pid, node.level + 3, 1, self.next_nonce())
            out.append(Broadcast(make_message(
                MsgKind.PREENDORSE, node.pid, node.level + 3, 1,
                hash_of(junk), hash_of(junk))))
        return out


STRATEGIES = {
    "silent": Silent,
    "equivocator": Equivocator,
    "double_voter": DoubleVoter,
    "stale_spammer": StaleSpammer,
    "future_liar": FutureLiar,
}


# --- the simulator --------------------------------------------------------------


class _Sim:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.ccfg = cfg.committee_config()
        self.rng_net = random.Random(_derive(cfg.seed, "net"))
        rng_clock = random.Random(_derive(cfg.seed, "clock"))
        self.rng_byz = random.Random(_derive(cfg.seed, "byz"))
        self.post_skew = {}
        self.pre_skew = {}
        for p in cfg.universe:
            self.post_skew[p] = rng_clock.randint(-cfg.rho, cfg.rho)
            o1 = rng_clock.randint(-cfg.delta_err, cfg.delta_err)
            o2 = rng_clock.randint(-cfg.delta_err, cfg.delta_err)
            switch = rng_clock.randint(0, cfg.gst) if cfg.gst > 0 else 0
            self.pre_skew[p] = (o1, o2, switch)
        genesis = Genesis(cfg.t0, cfg.genesis_seed, cfg.lookback)
        self.nodes = {
            p: ProcessNode(p, genesis, self.ccfg, cfg.duration, cfg.pull_interval)
            for p in cfg.universe
        }
        byz_map = dict(cfg.byzantine)
        self.strategies = {
            p: STRATEGIES[byz_map[p]](self.rng_byz) for p in byz_map
        }
        self.correct = tuple(p for p in cfg.universe if p not in byz_map)
        self.heap: list = []
        self.seq = 0
        self.now = 0
        self.events: list = []
        self.ev_seq = 0
        self.sig_registry: set[Signature] = set()
        self.buffer_sizes = {p: 0 for p in cfg.universe}
        self.checked_committees: set[int] = set()
        self.completed = False

    # -- plumbing ---------------------------------------------------------

    def _push(self, t: int, item: tuple) -> None:
        heapq.heappush(self.heap, (t, self.seq, item))
        self.seq += 1

    def _rec(self, ctor, *args) -> None:
        self.events.append(ctor(self.ev_seq, self.now, *args))
        self.ev_seq += 1

    def local_clock(self, p: int, t: int) -> int:
        if t >= self.cfg.gst:
            return t + self.post_skew[p]
        o1, o2, switch = self.pre_skew[p]
        return t + (o1 if t < switch else o2)

    def _delay_to(self, sender: int, dest: int, what: str) -> Optional[int]:
        """Sample the channel; None means the unit is lost pre-GST."""
        cfg = self.cfg
        if self.now >= cfg.gst:
            return self.rng_net.randint(1, cfg.delta)
        if sender in cfg.laggards or dest in cfg.laggards:
            self._rec(tr.Drop, dest, what)
            return None
        if self.rng_net.random() < cfg.loss_rate:
            self._rec(tr.Drop, dest, what)
            return None
        return self.rng_net.randint(1, 10 * cfg.delta)

    # -- signature discipline ----------------------------------------------

    def _qcs_in_message(self, m: Message):
        if isinstance(m.payload, ProposePayload):
            if m.payload.endorsement_qc:
                yield m.payload.endorsement_qc
            if m.payload.preendorsement_qc:
                yield m.payload.preendorsement_qc
        elif isinstance(m.payload, QuorumCertificate):
            yield m.payload

    def _authenticate(self, emitter: int, m: Message) -> None:
        if not message_sig_valid(m):
            raise AssertionError("malformed signature emitted; harness bug")
        if m.sender == emitter:
            self.sig_registry.add(m.sig)
        elif m.sig not in self.sig_registry:
            raise AssertionError("forged relay signature; harness bug")
        if self.cfg.check_crypto:
            for qc in self._qcs_in_message(m):
                for v in qc.votes:
                    if v not in self.sig_registry:
                        raise AssertionError("forged QC vote; harness bug")

    # -- effect interpretation ------------------------------------------------

    def _emit_message(self, sender: int, m: Message, dests) -> None:
        self._authenticate(sender, m)
        self._rec(tr.Send, sender, m)
        for q in dests:
            d = self._delay_to(sender, q, m.kind.name.lower())
            if d is not None:
                self._push(self.now + d, ("msg", q, m))

    def _process_effects(self, p: int, effects: list) -> None:
        cfg = self.cfg
        for e in effects:
            if isinstance(e, Broadcast):
                self._emit_message(p, e.msg, cfg.universe)  # includes self
            elif isinstance(e, SendTo):
                self._emit_message(p, e.msg, (e.to,))
            elif isinstance(e, SendChain):
                if isinstance(e.poc, Message):
                    self._authenticate(p, e.poc)
                d = self._delay_to(p, e.to, "chain")
                if d is not None:
                    self._push(self.now + d, ("chain", e.to, e.chain, e.poc))
            elif isinstance(e, PullRequest):
                self._rec(tr.PullReq, p)
                for q in cfg.universe:
                    if q == p:
                        continue
                    d = self._delay_to(p, q, "pull")
                    if d is not None:
                        self._push(self.now + d, ("pullarrive", q, p))
            elif isinstance(e, ScheduleTimer):
                self._push(self.now + e.delay, ("timer", p, e.timer_id))
            elif isinstance(e, Decide):
                self._rec(tr.DecideRec, p, e.block.header.level,
                          e.block.header.round, e.block, e.qc)
            elif isinstance(e, RoundEntered):
                self._rec(tr.RoundEnter, p, e.level, e.round, e.round_offset,
                          e.phase.name, self.local_clock(p, self.now))
            elif isinstance(e, HeadSwapped):
                self._rec(tr.HeadSwap, p, e.level, e.old_round, e.new_round)
            elif isinstance(e, Rejected):
                self._rec(tr.Reject, p, e.reason)
            else:
                raise TypeError(f"unknown effect {e!r}")

    def _guard_committee(self, node: ProcessNode) -> None:
        """Reject runs whose committees would exceed the fault budget."""
        level = node.level
        if level in self.checked_committees:
            return
        self.checked_committees.add(level)
        byz = {b for b, _ in self.cfg.byzantine}
        members = committee_at_level(node.chain, level, self.ccfg)
        if sum(1 for m in members if m in byz) > self.cfg.f:
            raise ConfigError(
                f"committee at level {level} has more than f byzantine members")

    # -- main loop -----------------------------------------------------------

    def run(self) -> tr.Trace:
        cfg = self.cfg
        self._guard_committee(self.nodes[cfg.universe[0]])  # level-1 committee
        for p in cfg.universe:
            self._push(0, ("start", p))
        target_len = cfg.target_level + 1
        while self.heap:
            t, _, item = heapq.heappop(self.heap)
            if t > cfg.horizon:
                break
            self.now = t
            kind, p = item[0], item[1]
            node = self.nodes[p]
            local = self.local_clock(p, t)
            ev = None
            if kind == "timer":
                ev = TimerFired(item[2])
            elif kind == "msg":
                self._rec(tr.Deliver, p, item[2])
                ev = NewMessage(item[2])
            elif kind == "chain":
                self._rec(tr.ChainRecv, p, len(item[2]))
                ev = NewChain(item[2], item[3])
            elif kind == "pullarrive":
                ev = PullRequestFrom(item[2])
            chain_before = node.chain
            if kind == "start":
                effects = start_node(node, local)
            else:
                effects = apply(node, ev, local)
            strategy = self.strategies.get(p)
            if strategy is not None:
                effects = strategy.transform(node, ev, effects)
            self._process_effects(p, effects)
            if node.chain is not chain_before:
                self._guard_committee(node)
                self._rec(tr.ChainUpdate, p, node.level, node.chain,
                          node.head_certificate)
            self._maybe_buffer(p, node)
            if self._done(target_len):
                self.completed = True
                break
        header = cfg.header()
        header["ended_at"] = self.now
        header["completed"] = self.completed
        return tr.Trace(header, self.events)

    def _maybe_buffer(self, p: int, node: ProcessNode) -> None:
        size = len(node.instance.messages)
        if size != self.buffer_sizes[p]:
            self.buffer_sizes[p] = size
            self._rec(tr.BufferSize, p, size)

    def _done(self, target_len: int) -> bool:
        return all(self.nodes[p].level >= target_len for p in self.correct)


def run_sim(cfg: SimConfig) -> tr.Trace:
    cfg.validate()
    reset_digest_registry(cfg.check_crypto)
    return _Sim(cfg).run()
