"""Trace oracles: decidable checks of the protocol's correctness properties
over finished traces, plus the analytic recovery-time bound.

Every oracle inspects only the trace (never live node state), so stored trace
files can be re-checked offline. The safety oracles are prefix-closed: a pass
on a trace implies a pass on every prefix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .chain import Chain, committee_at_level, valid_chain_reason
from .core import MsgKind, ProposePayload, QuorumCertificate, hash_of
from .simnet import config_from_header
from .synchro import DurationFn, delta_inv, level_start
from .trace import (
    BufferSize,
    ChainUpdate,
    DecideRec,
    Deliver,
    Drop,
    PullReq,
    Reject,
    RoundEnter,
    Send,
    Trace,
)

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Verdict:
    prop: str
    status: str
    index: Optional[int]  # seq of the first counterexample event
    detail: str

    @property
    def ok(self) -> bool:
        return self.status == PASS


def _correct_pids(header: dict) -> tuple[int, ...]:
    byz = {p for p, _ in header["byzantine"]}
    return tuple(p for p in header["universe"] if p not in byz)


def _final_chains(trace: Trace) -> dict[int, Chain]:
    chains: dict[int, Chain] = {}
    for e in trace.events:
        if isinstance(e, ChainUpdate):
            chains[e.p] = e.chain
    return chains


def _longest_correct_chain(trace: Trace) -> Optional[Chain]:
    correct = set(_correct_pids(trace.header))
    best: Optional[Chain] = None
    for p, c in _final_chains(trace).items():
        if p in correct and (best is None or len(c) > len(best)):
            best = c
    return best


# --- safety oracles -------------------------------------------------------------


def check_agreement(trace: Trace) -> Verdict:
    """Committed blocks (everything below the head) of correct processes are
    pairwise prefix-related; equivalently they agree with one global registry."""
    correct = set(_correct_pids(trace.header))
    registry: dict[int, bytes] = {}
    for e in trace.events:
        if not isinstance(e, ChainUpdate) or e.p not in correct:
            continue
        for block in e.chain[:-1]:
            lvl = block.header.level
            h = hash_of(block)
            seen = registry.setdefault(lvl, h)
            if seen != h:
                return Verdict("agreement", FAIL, e.seq,
                               f"conflicting committed block at level {lvl} (process {e.p})")
    return Verdict("agreement", PASS, None,
                   f"{len(registry)} committed levels consistent")


def check_validity(trace: Trace) -> Verdict:
    """Every chain a correct process ever holds validates against its head
    certificate (hash links, certificates, proposer legitimacy)."""
    cfg = config_from_header(trace.header).committee_config()
    correct = set(_correct_pids(trace.header))
    checked: dict[bytes, Optional[str]] = {}
    count = 0
    for e in trace.events:
        if not isinstance(e, ChainUpdate) or e.p not in correct:
            continue
        key = hash_of(e.chain[-1])
        if key in checked:
            reason = checked[key]
        else:
            reason = valid_chain_reason(e.chain, e.cert, cfg)
            checked[key] = reason
        count += 1
        if reason is not None:
            return Verdict("validity", FAIL, e.seq, f"process {e.p}: {reason}")
    return Verdict("validity", PASS, None, f"{count} chain updates valid")


def check_vote_once(trace: Trace) -> Verdict:
    """No correct process sends two (pre)endorsements for the same level+round."""
    correct = set(_correct_pids(trace.header))
    seen: set[tuple] = set()
    for e in trace.events:
        if not isinstance(e, Send) or e.p not in correct:
            continue
        if e.msg.kind not in (MsgKind.PREENDORSE, MsgKind.ENDORSE):
            continue
        key = (e.p, int(e.msg.kind), e.msg.level, e.msg.round)
        if key in seen:
            return Verdict("vote_once", FAIL, e.seq,
                           f"process {e.p} voted twice: {e.msg.kind.name} "
                           f"level {e.msg.level} round {e.msg.round}")
        seen.add(key)
    return Verdict("vote_once", PASS, None, f"{len(seen)} votes, all unique")


def _qcs_in_event(e) -> list[QuorumCertificate]:
    out = []
    if isinstance(e, Send):
        pl = e.msg.payload
        if isinstance(pl, ProposePayload):
            out += [q for q in (pl.endorsement_qc, pl.preendorsement_qc) if q]
        elif isinstance(pl, QuorumCertificate):
            out.append(pl)
    elif isinstance(e, DecideRec):
        out.append(e.qc)
        hdr = e.block.header
        out += [q for q in (hdr.endorsement_qc, hdr.preendorsement_qc) if q]
    elif isinstance(e, ChainUpdate):
        if e.cert:
            out.append(e.cert)
        for b in e.chain:
            out += [q for q in (b.header.endorsement_qc, b.header.preendorsement_qc) if q]
    return out


def check_qc_uniqueness(trace: Trace) -> Verdict:
    """Per (kind, level, round), every quorum certificate observed anywhere in
    the trace attests a single value hash."""
    header = trace.header
    f = header["f"]
    spine = _longest_correct_chain(trace)
    cfg = config_from_header(header).committee_config()
    members_at: dict[int, set] = {}

    def committee_of(level: int) -> Optional[set]:
        if level not in members_at:
            try:
                members_at[level] = set(committee_at_level(spine, level, cfg)) \
                    if spine is not None else None
            except Exception:
                members_at[level] = None
        return members_at[level]

    attested: dict[tuple, bytes] = {}
    for e in trace.events:
        for qc in _qcs_in_event(e):
            signers = {v.signer for v in qc.votes}
            members = committee_of(qc.level)
            if members is not None:
                signers &= members
            if len(signers) < 2 * f + 1:
                continue  # not a quorum, carries no agreement weight
            key = (int(qc.kind), qc.level, qc.round)
            seen = attested.setdefault(key, qc.value_hash)
            if seen != qc.value_hash:
                return Verdict("qc_uniqueness", FAIL, e.seq,
                               f"two QCs for kind={qc.kind.name} level={qc.level} "
                               f"round={qc.round} attest different values")
    return Verdict("qc_uniqueness", PASS, None, f"{len(attested)} QC slots unique")


def check_buffer_bound(trace: Trace) -> Verdict:
    n = trace.header["n"]
    bound = 4 * n + 2
    high = 0
    for e in trace.events:
        if isinstance(e, BufferSize):
            high = max(high, e.size)
            if e.size > bound:
                return Verdict("buffer_bound", FAIL, e.seq,
                               f"buffer of process {e.p} reached {e.size} > {bound}")
    return Verdict("buffer_bound", PASS, None, f"high-water {high} <= {bound}")


# --- liveness-flavored oracles -----------------------------------------------------


def check_termination(trace: Trace, sync_round: int = 1,
                      bound: Optional[int] = None) -> Verdict:
    """All correct committee members decide each level within `bound` rounds
    (default: sync_round + f + 1). Requires a scenario engineered so that
    correct bakers start each level synchronized at `sync_round`."""
    header = trace.header
    f = header["f"]
    if bound is None:
        bound = sync_round + f + 1
    correct = set(_correct_pids(header))
    spine = _longest_correct_chain(trace)
    if spine is None or len(spine) < 2:
        return Verdict("termination", INCONCLUSIVE, None, "no level decided")
    cfg = config_from_header(header).committee_config()
    decided: dict[tuple[int, int], int] = {}
    for e in trace.events:
        if isinstance(e, DecideRec) and e.p in correct:
            decided.setdefault((e.p, e.level), e.round)
    complete_levels = 0
    worst = 0
    for level in range(1, len(spine)):
        bakers = [p for p in committee_at_level(spine, level, cfg) if p in correct]
        rounds = [decided.get((p, level)) for p in bakers]
        if any(r is None for r in rounds):
            break  # horizon cut this level short; later levels undecided too
        complete_levels += 1
        worst = max(worst, *rounds)
        if max(rounds) > bound:
            return Verdict("termination", FAIL, None,
                           f"level {level} decided at round {max(rounds)} > {bound}")
    if complete_levels == 0:
        return Verdict("termination", INCONCLUSIVE, None,
                       "no level fully decided by all correct bakers")
    return Verdict("termination", PASS, None,
                   f"{complete_levels} levels decided, worst round {worst} <= {bound}")


def _lengths_at(trace: Trace, t: int, pids) -> dict[int, int]:
    lens = {p: 1 for p in pids}
    for e in trace.events:
        if isinstance(e, ChainUpdate) and e.p in lens and e.t <= t:
            lens[e.p] = e.length
    return lens


def _progress_threshold(header: dict) -> int:
    """Time after GST that suffices for one more decision even from the worst
    plausible position: a pull round-trip plus a couple of committee rotations."""
    d = DurationFn(*header["duration"])
    r0 = delta_inv(d, max(0, header["gst"] - header["t0"]))
    budget = sum(d.round_duration(r) for r in range(r0, r0 + 2 * header["n"] + 6))
    return header["pull_interval"] + 2 * header["delta"] + budget


def check_progress(trace: Trace) -> Verdict:
    """Bounded-horizon progress: every correct process decides at least one new
    level after GST. Fails only when the window was adequate."""
    header = trace.header
    correct = _correct_pids(header)
    start = _lengths_at(trace, header["gst"], correct)
    end = _lengths_at(trace, header["ended_at"], correct)
    stuck = [p for p in correct if end[p] <= start[p]]
    if not stuck:
        gained = min(end[p] - start[p] for p in correct)
        return Verdict("progress", PASS, None,
                       f"all correct processes gained >= {gained} level(s) after GST")
    window = header["ended_at"] - header["gst"]
    if window < _progress_threshold(header):
        return Verdict("progress", INCONCLUSIVE, None,
                       f"horizon too short to judge (window {window})")
    return Verdict("progress", FAIL, None,
                   f"processes {stuck} made no progress in an adequate window")


# --- recovery bound (clock-drift-free analysis) --------------------------------------


@dataclass(frozen=True)
class RecoveryReport:
    bound: int
    measured: Optional[int]
    status: str
    detail: str

    @property
    def ok(self) -> bool:
        return self.status == PASS


def measured_recovery(trace: Trace) -> Optional[int]:
    """Time from GST to the first round boundary at which every correct process
    enters the same (level, round) simultaneously, at offset zero."""
    header = trace.header
    gst = header["gst"]
    correct = set(_correct_pids(header))
    by_time: dict[int, dict[int, tuple[int, int]]] = {}
    for e in trace.events:
        if isinstance(e, RoundEnter) and e.p in correct and e.t >= gst \
                and e.round_offset == 0:
            by_time.setdefault(e.t, {})[e.p] = (e.level, e.round)
    for t in sorted(by_time):
        entries = by_time[t]
        if set(entries) == correct and len(set(entries.values())) == 1:
            return t - gst
    return None


def recovery_bound(trace: Trace) -> RecoveryReport:
    header = trace.header
    if header["rho"] != 0:
        return RecoveryReport(0, None, INCONCLUSIVE,
                              "recovery analysis assumes zero clock drift after GST")
    duration = DurationFn(*header["duration"])
    gst, t0 = header["gst"], header["t0"]
    pull_i, delta = header["pull_interval"], header["delta"]
    delta_pull = 2 * delta  # one request/response round trip in this network model
    correct = _correct_pids(header)
    level_tau = max(_lengths_at(trace, gst, correct).values())
    spine = _longest_correct_chain(trace)
    if spine is None or len(spine) < level_tau + 1:
        return RecoveryReport(0, None, INCONCLUSIVE,
                              "trace ends before the level pending at GST was decided")
    t1 = level_start(spine[: level_tau + 1], duration, t0)
    r = delta_inv(duration, max(0, gst + pull_i + delta_pull - t1))
    r_prime = delta_inv(duration, max(0, gst - t1))
    bound = max(
        header["delta_err"],
        pull_i + delta_pull + duration.round_duration(r),
        duration.round_duration(r_prime) + duration.round_duration(r_prime + 1),
    )
    measured = measured_recovery(trace)
    if measured is None:
        return RecoveryReport(bound, None, INCONCLUSIVE,
                              "processes never observed simultaneously synchronized")
    status = PASS if measured <= bound else FAIL
    return RecoveryReport(bound, measured, status,
                          f"measured {measured} vs bound {bound}")


# --- registry and metrics --------------------------------------------------------------

PROPERTIES = {
    "agreement": check_agreement,
    "validity": check_validity,
    "vote_once": check_vote_once,
    "qc_uniqueness": check_qc_uniqueness,
    "buffer_bound": check_buffer_bound,
    "progress": check_progress,
}


def check_properties(trace: Trace, names) -> list[Verdict]:
    out = []
    for name in names:
        if name == "termination":
            out.append(check_termination(trace))
        else:
            out.append(PROPERTIES[name](trace))
    return out


def compute_metrics(trace: Trace) -> dict:
    header = trace.header
    gst = header["gst"]
    correct = set(_correct_pids(header))
    decisions: dict[int, dict[int, dict]] = {}
    buffer_high: dict[int, int] = {}
    sends: dict[str, int] = {}
    drops_pre_gst = 0
    rejects = 0
    pulls = 0
    for e in trace.events:
        if isinstance(e, DecideRec):
            decisions.setdefault(e.level, {})[e.p] = {"round": e.round, "t": e.t}
        elif isinstance(e, BufferSize):
            if e.size > buffer_high.get(e.p, 0):
                buffer_high[e.p] = e.size
        elif isinstance(e, Send):
            k = e.msg.kind.name.lower()
            sends[k] = sends.get(k, 0) + 1
        elif isinstance(e, Drop):
            if e.t < gst:
                drops_pre_gst += 1
        elif isinstance(e, Reject):
            rejects += 1
        elif isinstance(e, PullReq):
            pulls += 1
    final_lens = _lengths_at(trace, header["ended_at"], sorted(correct))
    metrics = {
        "decisions": decisions,
        "decided_levels": final_lens,
        "buffer_high_water": buffer_high,
        "sends_by_kind": sends,
        "drops_pre_gst": drops_pre_gst,
        "rejects": rejects,
        "pull_requests": pulls,
        "completed": header.get("completed", False),
        "ended_at": header.get("ended_at"),
    }
    if header["rho"] == 0:
        metrics["recovery_measured"] = measured_recovery(trace)
    return metrics
