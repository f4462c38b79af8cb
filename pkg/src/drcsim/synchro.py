"""Message-free round/phase synchronization from the local clock and the
rounds recorded in block headers.

Round r lasts ``round_duration(r)`` which is split into three equal phases of
``phase_duration(r)``; durations grow geometrically up to a cap and then
linearly, so they are strictly increasing and unbounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .core import PHASE_COUNT, Phase, ProtocolError
from .chain import Chain


class ClockBeforeLevelStart(ProtocolError):
    """The local clock has not yet reached the start of the current level."""

    def __init__(self, level_start: int, local_now: int):
        super().__init__(f"clock {local_now} before level start {level_start}")
        self.level_start = level_start
        self.local_now = local_now


@dataclass(frozen=True)
class DurationFn:
    base: int       # phase duration of round 1, in microseconds
    growth: int     # geometric factor up to cap_round
    cap_round: int
    lin_step: int   # per-round phase increment past the cap

    def validate(self, rho: int = 0) -> None:
        if self.base < 1 or self.growth < 2 or self.cap_round < 1 or self.lin_step < 1:
            raise ValueError("duration function must be strictly increasing and unbounded")
        if self.base <= 2 * rho:
            raise ValueError("phase duration of round 1 must exceed twice the clock skew")

    def phase_duration(self, r: int) -> int:
        if r <= self.cap_round:
            return self.base * self.growth ** (r - 1)
        return self.base * self.growth ** (self.cap_round - 1) + self.lin_step * (r - self.cap_round)

    def round_duration(self, r: int) -> int:
        return PHASE_COUNT * self.phase_duration(r)


@dataclass(frozen=True)
class SyncResult:
    round: int
    round_offset: int


@dataclass(frozen=True)
class PhasePosition:
    phase: Phase
    phase_offset: int


@lru_cache(maxsize=4096)
def _rounds_total(duration: DurationFn, last_round: int) -> int:
    """Sum of round durations 1..last_round (a level's total span)."""
    return sum(duration.round_duration(j) for j in range(1, last_round + 1))


@lru_cache(maxsize=4096)
def _committed_start(rounds: tuple[int, ...], duration: DurationFn) -> int:
    return sum(_rounds_total(duration, r) for r in rounds)


def level_start(chain: Chain, duration: DurationFn, t0: int) -> int:
    """Nominal start time of the level a process with this chain works at.

    Each previous level contributes the durations of all its rounds up to and
    including the round recorded in its block header; genesis contributes 0.
    """
    return t0 + _committed_start(tuple(b.header.round for b in chain[1:]), duration)


def synchronize(chain: Chain, local_now: int, duration: DurationFn, t0: int) -> SyncResult:
    t = level_start(chain, duration, t0)
    if local_now < t:
        raise ClockBeforeLevelStart(t, local_now)
    r = 1
    while t + duration.round_duration(r) <= local_now:
        t += duration.round_duration(r)
        r += 1
    return SyncResult(r, local_now - t)


_PHASES = (Phase.PROPOSE, Phase.PREENDORSE, Phase.ENDORSE)


def get_next_phase(round: int, round_offset: int, duration: DurationFn) -> PhasePosition:
    d = duration.phase_duration(round)
    i = round_offset // d
    return PhasePosition(_PHASES[i], round_offset - i * d)


def round_start_offset(duration: DurationFn, r: int) -> int:
    """Cumulative offset of round r within its level (round 1 starts at 0)."""
    return _rounds_total(duration, r - 1)


def delta_inv(duration: DurationFn, td: int) -> int:
    """The round a process is at, `td` time after its level started."""
    r, t = 1, 0
    while t + duration.round_duration(r) <= td:
        t += duration.round_duration(r)
        r += 1
    return r
