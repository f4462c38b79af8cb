"""Command-line harness.

Verbs:
  run    -- simulate one scenario, write trace + metrics files
  check  -- run trace oracles over a stored trace, print a verdict table
  sweep  -- run a scenario across many seeds (parallel), aggregate verdicts
  bound  -- evaluate the analytic recovery-time bound against a trace

Exit codes: 0 all selected oracles pass, 1 oracle failure, 2 configuration
error, 3 inconclusive liveness verdicts (and nothing failed).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import harness, trace as tr
from .scenario import DEFAULT_PROPERTIES, load_scenario
from .simnet import ConfigError, run_sim
from .verifier import (
    FAIL,
    INCONCLUSIVE,
    check_properties,
    compute_metrics,
    recovery_bound,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_INCONCLUSIVE = 3


def _out_dir(arg) -> Path:
    out = Path(arg or os.environ.get("DRCSIM_OUT_DIR", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _verdict_table(verdicts) -> str:
    rows = [f"  {v.prop:<15} {v.status:<13} {v.detail}"
            + (f" (event {v.index})" if v.index is not None else "")
            for v in verdicts]
    return "\n".join(rows)


def _exit_from(verdicts) -> int:
    if any(v.status == FAIL for v in verdicts):
        return EXIT_FAIL
    if any(v.status == INCONCLUSIVE for v in verdicts):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg = scenario.config if args.seed is None else scenario.with_seed(args.seed)
    t = run_sim(cfg)
    out = _out_dir(args.out)
    trace_path = out / f"{scenario.name}.trace.jsonl"
    tr.write_trace(t, trace_path)
    metrics = compute_metrics(t)
    metrics_path = out / f"{scenario.name}.metrics.json"
    metrics_path.write_text(json.dumps(metrics, indent=2, sort_keys=True, default=str))
    print(f"trace:   {trace_path} ({len(t.events)} events)")
    print(f"metrics: {metrics_path}")
    decided = metrics["decided_levels"]
    print(f"decided levels per correct process: "
          f"{ {p: l - 1 for p, l in decided.items()} }")
    return EXIT_OK


def cmd_check(args) -> int:
    t = tr.read_trace(args.trace)
    props = tuple(x.strip() for x in args.props.split(",")) if args.props \
        else DEFAULT_PROPERTIES
    verdicts = check_properties(t, props)
    print(_verdict_table(verdicts))
    return _exit_from(verdicts)


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    if ":" in args.seeds:
        lo, hi = args.seeds.split(":")
        seeds = range(int(lo), int(hi))
    else:
        seeds = range(int(args.seeds))
    props = tuple(x.strip() for x in args.props.split(",")) if args.props \
        else scenario.properties
    configs = harness.seeded(scenario.config, seeds)
    if not configs:
        print("empty seed range; nothing to do")
        return EXIT_OK
    results = harness.sweep(configs, props, jobs=args.jobs)
    per_prop: dict[str, dict[str, int]] = {}
    for r in results:
        for v in r.verdicts:
            per_prop.setdefault(v.prop, {"pass": 0, "fail": 0, "inconclusive": 0})
            per_prop[v.prop][v.status] += 1
    print(f"{len(results)} runs of scenario {scenario.name!r}")
    for prop, counts in per_prop.items():
        print(f"  {prop:<15} pass={counts['pass']:<5} fail={counts['fail']:<5} "
              f"inconclusive={counts['inconclusive']}")
    high = max((max(r.metrics["buffer_high_water"].values(), default=0)
                for r in results), default=0)
    print(f"  buffer high-water across runs: {high}")
    return _exit_from([v for r in results for v in r.verdicts])


def cmd_bound(args) -> int:
    t = tr.read_trace(args.trace)
    report = recovery_bound(t)
    print(f"recovery bound:    {report.bound}")
    print(f"measured recovery: {report.measured}")
    print(f"verdict:           {report.status} ({report.detail})")
    if report.status == FAIL:
        return EXIT_FAIL
    if report.status == INCONCLUSIVE:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="drcsim", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario, write trace + metrics")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--out", default=None, help="output dir (or $DRCSIM_OUT_DIR)")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.set_defaults(fn=cmd_run)

    p_check = sub.add_parser("check", help="run oracles over a stored trace")
    p_check.add_argument("--trace", required=True)
    p_check.add_argument("--props", default=None, help="comma-separated property names")
    p_check.set_defaults(fn=cmd_check)

    p_sweep = sub.add_parser("sweep", help="run a scenario across many seeds")
    p_sweep.add_argument("--scenario", required=True)
    p_sweep.add_argument("--seeds", default="20", help="count or lo:hi range")
    p_sweep.add_argument("--props", default=None)
    p_sweep.add_argument("--jobs", type=int, default=None)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_bound = sub.add_parser("bound", help="recovery bound vs measured recovery")
    p_bound.add_argument("--trace", required=True)
    p_bound.add_argument("--scenario", default=None,
                         help="optional; the trace header already carries the config")
    p_bound.set_defaults(fn=cmd_bound)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
