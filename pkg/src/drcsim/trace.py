"""Trace records and their file representation.

A trace is the complete, time-ordered account of one simulation: every send,
delivery, drop, state transition, decision and chain update of every process.
All oracles and metrics work from traces alone, so stored traces can be
re-checked offline.

File format: JSON lines. Line 1 is a header carrying a schema id and the full
run configuration; every following line is one event with a monotonically
increasing ``seq``. Protocol objects (messages, blocks, certificates, chains)
are embedded as hex of their canonical encoding, which makes emitted files a
pure function of the run and `parse(emit(trace)) == trace`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Union

from .chain import Chain
from .core import (
    Block,
    Message,
    QuorumCertificate,
    decode_block,
    decode_chain,
    decode_message,
    decode_qc,
    encode,
)

SCHEMA = "drcsim-trace-v1"


@dataclass(frozen=True)
class Send:
    seq: int
    t: int
    p: int
    msg: Message


@dataclass(frozen=True)
class Deliver:
    seq: int
    t: int
    p: int  # destination
    msg: Message


@dataclass(frozen=True)
class Drop:
    seq: int
    t: int
    p: int  # intended destination
    what: str  # message kind name, "chain", or "pull"


@dataclass(frozen=True)
class PullReq:
    seq: int
    t: int
    p: int


@dataclass(frozen=True)
class ChainRecv:
    seq: int
    t: int
    p: int  # receiver
    length: int


@dataclass(frozen=True)
class RoundEnter:
    seq: int
    t: int
    p: int
    level: int
    round: int
    round_offset: int
    phase: str
    local: int  # the process's clock reading at entry


@dataclass(frozen=True)
class DecideRec:
    seq: int
    t: int
    p: int
    level: int
    round: int
    block: Block
    qc: QuorumCertificate


@dataclass(frozen=True)
class ChainUpdate:
    seq: int
    t: int
    p: int
    length: int
    chain: Chain
    cert: Optional[QuorumCertificate]


@dataclass(frozen=True)
class HeadSwap:
    seq: int
    t: int
    p: int
    level: int
    old_round: int
    new_round: int


@dataclass(frozen=True)
class BufferSize:
    seq: int
    t: int
    p: int
    size: int


@dataclass(frozen=True)
class Reject:
    seq: int
    t: int
    p: int
    reason: str


TraceEvent = Union[Send, Deliver, Drop, PullReq, ChainRecv, RoundEnter,
                   DecideRec, ChainUpdate, HeadSwap, BufferSize, Reject]


@dataclass
class Trace:
    header: dict
    events: list


def _hex(x) -> str:
    return encode(x).hex()


def _event_to_obj(e: TraceEvent) -> dict:
    obj = {"seq": e.seq, "t": e.t, "p": e.p}
    if isinstance(e, Send):
        obj["kind"] = "send"
        obj["msg"] = _hex(e.msg)
    elif isinstance(e, Deliver):
        obj["kind"] = "deliver"
        obj["msg"] = _hex(e.msg)
    elif isinstance(e, Drop):
        obj["kind"] = "drop"
        obj["what"] = e.what
    elif isinstance(e, PullReq):
        obj["kind"] = "pull"
    elif isinstance(e, ChainRecv):
        obj.update(kind="chainrecv", length=e.length)
    elif isinstance(e, RoundEnter):
        obj.update(kind="round", level=e.level, round=e.round,
                   round_offset=e.round_offset, phase=e.phase, local=e.local)
    elif isinstance(e, DecideRec):
        obj.update(kind="decide", level=e.level, round=e.round,
                   block=_hex(e.block), qc=_hex(e.qc))
    elif isinstance(e, ChainUpdate):
        obj.update(kind="chain", length=e.length, chain=_hex(e.chain),
                   cert=None if e.cert is None else _hex(e.cert))
    elif isinstance(e, HeadSwap):
        obj.update(kind="headswap", level=e.level, old_round=e.old_round,
                   new_round=e.new_round)
    elif isinstance(e, BufferSize):
        obj.update(kind="buffer", size=e.size)
    elif isinstance(e, Reject):
        obj.update(kind="reject", reason=e.reason)
    else:
        raise TypeError(f"unknown trace event {e!r}")
    return obj


def _event_from_obj(o: dict) -> TraceEvent:
    seq, t, p, kind = o["seq"], o["t"], o["p"], o["kind"]
    if kind == "send":
        return Send(seq, t, p, decode_message(bytes.fromhex(o["msg"])))
    if kind == "deliver":
        return Deliver(seq, t, p, decode_message(bytes.fromhex(o["msg"])))
    if kind == "drop":
        return Drop(seq, t, p, o["what"])
    if kind == "pull":
        return PullReq(seq, t, p)
    if kind == "chainrecv":
        return ChainRecv(seq, t, p, o["length"])
    if kind == "round":
        return RoundEnter(seq, t, p, o["level"], o["round"], o["round_offset"],
                          o["phase"], o["local"])
    if kind == "decide":
        return DecideRec(seq, t, p, o["level"], o["round"],
                         decode_block(bytes.fromhex(o["block"])),
                         decode_qc(bytes.fromhex(o["qc"])))
    if kind == "chain":
        cert = None if o["cert"] is None else decode_qc(bytes.fromhex(o["cert"]))
        return ChainUpdate(seq, t, p, o["length"],
                           decode_chain(bytes.fromhex(o["chain"])), cert)
    if kind == "headswap":
        return HeadSwap(seq, t, p, o["level"], o["old_round"], o["new_round"])
    if kind == "buffer":
        return BufferSize(seq, t, p, o["size"])
    if kind == "reject":
        return Reject(seq, t, p, o["reason"])
    raise ValueError(f"unknown trace event kind {kind!r}")


def emit(trace: Trace) -> bytes:
    head = dict(trace.header)
    head["schema"] = SCHEMA
    lines = [json.dumps(head, sort_keys=True, separators=(",", ":"))]
    lines += [json.dumps(_event_to_obj(e), separators=(",", ":")) for e in trace.events]
    return ("\n".join(lines) + "\n").encode()


def parse(data: bytes) -> Trace:
    lines = data.decode().splitlines()
    if not lines:
        raise ValueError("empty trace file")
    header = json.loads(lines[0])
    if header.get("schema") != SCHEMA:
        raise ValueError(f"unsupported trace schema {header.get('schema')!r}")
    events = [_event_from_obj(json.loads(line)) for line in lines[1:]]
    return Trace(header, events)


def write_trace(trace: Trace, path) -> None:
    with open(path, "wb") as fh:
        fh.write(emit(trace))


def read_trace(path) -> Trace:
    with open(path, "rb") as fh:
        return parse(fh.read())
