"""Run orchestration shared by the CLI and the acceptance suite: single runs
with verdicts/metrics, seed sweeps across worker processes, determinism checks.

Each simulation is single-threaded and self-contained; sweeps parallelize
across OS processes (one simulation per worker) with no shared mutable state,
so aggregation is order-independent.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

from . import trace as tr
from .simnet import SimConfig, run_sim
from .verifier import Verdict, check_properties, compute_metrics


@dataclass(frozen=True)
class RunResult:
    name: str
    seed: int
    verdicts: tuple[Verdict, ...]
    metrics: dict
    trace_sha: str

    @property
    def failed(self) -> tuple[Verdict, ...]:
        return tuple(v for v in self.verdicts if v.status == "fail")

    @property
    def inconclusive(self) -> tuple[Verdict, ...]:
        return tuple(v for v in self.verdicts if v.status == "inconclusive")


def run_and_check(cfg: SimConfig, properties) -> RunResult:
    t = run_sim(cfg)
    verdicts = tuple(check_properties(t, properties))
    metrics = compute_metrics(t)
    sha = hashlib.sha256(tr.emit(t)).hexdigest()
    return RunResult(cfg.name, cfg.seed, verdicts, metrics, sha)


def _sweep_task(args) -> RunResult:
    cfg, properties = args
    return run_and_check(cfg, properties)


def sweep(configs: list[SimConfig], properties, jobs: Optional[int] = None) -> list[RunResult]:
    tasks = [(cfg, tuple(properties)) for cfg in configs]
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(tasks) <= 1:
        return [_sweep_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_task, tasks, chunksize=max(1, len(tasks) // (jobs * 8))))


def seeded(cfg: SimConfig, seeds) -> list[SimConfig]:
    return [replace(cfg, seed=s) for s in seeds]


def trace_bytes(cfg: SimConfig) -> bytes:
    return tr.emit(run_sim(cfg))


def _determinism_task(cfg: SimConfig) -> bool:
    return trace_bytes(cfg) == trace_bytes(cfg)


def determinism_check(configs: list[SimConfig], jobs: Optional[int] = None) -> list[bool]:
    """Run each config twice and compare trace bytes."""
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(configs) <= 1:
        return [_determinism_task(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_determinism_task, configs))
