"""Scenario files: a flat, typed key/value format with sections, chosen to be
diff-friendly for golden files.

Sections: [sim] network and fault-injection knobs, [protocol] consensus
parameters, [adversary] byzantine/laggard placement, [oracles] which
properties a `check` run evaluates. All times are integer microseconds.
"""

from __future__ import annotations

from configparser import ConfigParser
from dataclasses import dataclass, replace
from pathlib import Path

from .simnet import ConfigError, SimConfig
from .synchro import DurationFn

DEFAULT_PROPERTIES = ("agreement", "validity", "vote_once", "qc_uniqueness",
                      "buffer_bound", "progress")


@dataclass(frozen=True)
class Scenario:
    name: str
    config: SimConfig
    properties: tuple[str, ...] = DEFAULT_PROPERTIES

    def with_seed(self, seed: int) -> SimConfig:
        return replace(self.config, seed=seed)


def make_config(
    *,
    seed: int = 1,
    gst: int = 0,
    delta: int = 30_000,
    rho: int = 0,
    delta_err: int = 0,
    loss_rate: float = 0.0,
    horizon: int = 40_000_000,
    n: int = 4,
    f: int = 1,
    lookback: int = 2,
    universe=None,
    byzantine=(),
    laggards=(),
    base: int = 100_000,
    growth: int = 2,
    cap_round: int = 3,
    lin_step: int = 50_000,
    pull_interval: int = 150_000,
    t0: int = 0,
    genesis_seed: bytes = b"\xd4\xc3\xb2\xa1",
    target_level: int = 10,
    name: str = "run",
) -> SimConfig:
    if universe is None:
        universe = tuple(range(n))
    return SimConfig(
        seed=seed, gst=gst, delta=delta, rho=rho, delta_err=delta_err,
        loss_rate=loss_rate, horizon=horizon, n=n, f=f, lookback=lookback,
        universe=tuple(universe), byzantine=tuple(byzantine),
        laggards=tuple(laggards),
        duration=DurationFn(base, growth, cap_round, lin_step),
        pull_interval=pull_interval, t0=t0, genesis_seed=genesis_seed,
        target_level=target_level, name=name,
    )


def _int_list(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(int(x) for x in raw.split(","))


def load_scenario(path) -> Scenario:
    path = Path(path)
    parser = ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read scenario file {path}")
    try:
        sim = parser["sim"]
        proto = parser["protocol"]
        adv = parser["adversary"] if parser.has_section("adversary") else {}
        oracles = parser["oracles"] if parser.has_section("oracles") else {}
        byzantine = []
        raw_byz = adv.get("byzantine", "").strip()
        if raw_byz:
            for item in raw_byz.split(","):
                pid, strat = item.strip().split(":")
                byzantine.append((int(pid), strat))
        universe = _int_list(proto.get("universe", ""))
        cfg = make_config(
            seed=sim.getint("seed", 1),
            gst=sim.getint("gst", 0),
            delta=sim.getint("delta", 30_000),
            rho=sim.getint("rho", 0),
            delta_err=sim.getint("delta_err", 0),
            loss_rate=sim.getfloat("loss_rate", 0.0),
            horizon=sim.getint("horizon", 40_000_000),
            n=proto.getint("n", 4),
            f=proto.getint("f", 1),
            lookback=proto.getint("lookback", 2),
            universe=universe or None,
            byzantine=byzantine,
            laggards=_int_list(adv.get("laggards", "")),
            base=proto.getint("base", 100_000),
            growth=proto.getint("growth", 2),
            cap_round=proto.getint("cap_round", 3),
            lin_step=proto.getint("lin_step", 50_000),
            pull_interval=proto.getint("pull_interval", 150_000),
            t0=proto.getint("t0", 0),
            genesis_seed=bytes.fromhex(proto.get("genesis_seed", "d4c3b2a1")),
            target_level=proto.getint("target_level", 10),
            name=path.stem,
        )
    except (KeyError, ValueError) as e:
        raise ConfigError(f"bad scenario file {path}: {e}") from e
    props = oracles.get("properties", "") if oracles else ""
    names = tuple(x.strip() for x in props.split(",") if x.strip()) or DEFAULT_PROPERTIES
    return Scenario(path.stem, cfg, names)


def save_scenario(scenario: Scenario, path) -> None:
    cfg = scenario.config
    parser = ConfigParser()
    parser["sim"] = {
        "seed": str(cfg.seed),
        "gst": str(cfg.gst),
        "delta": str(cfg.delta),
        "rho": str(cfg.rho),
        "delta_err": str(cfg.delta_err),
        "loss_rate": str(cfg.loss_rate),
        "horizon": str(cfg.horizon),
    }
    parser["protocol"] = {
        "n": str(cfg.n),
        "f": str(cfg.f),
        "lookback": str(cfg.lookback),
        "universe": ",".join(str(p) for p in cfg.universe),
        "base": str(cfg.duration.base),
        "growth": str(cfg.duration.growth),
        "cap_round": str(cfg.duration.cap_round),
        "lin_step": str(cfg.duration.lin_step),
        "pull_interval": str(cfg.pull_interval),
        "t0": str(cfg.t0),
        "genesis_seed": cfg.genesis_seed.hex(),
        "target_level": str(cfg.target_level),
    }
    parser["adversary"] = {
        "byzantine": ",".join(f"{p}:{s}" for p, s in cfg.byzantine),
        "laggards": ",".join(str(p) for p in cfg.laggards),
    }
    parser["oracles"] = {"properties": ",".join(scenario.properties)}
    with open(path, "w") as fh:
        parser.write(fh)
