import pytest

from drcsim.chain import CommitteeConfig
from drcsim.core import (
    Genesis,
    MsgKind,
    ProposePayload,
    QCKind,
    Signature,
    Value,
    hash_of,
    make_genesis_block,
    make_message,
    make_qc,
    vote_digest,
)
from drcsim.driver import ProcessNode
from drcsim.scenario import make_config
from drcsim.simnet import run_sim
from drcsim.synchro import DurationFn

GSEED = b"\xd4\xc3\xb2\xa1"


def lin3() -> DurationFn:
    """Phase duration r, round duration 3r: the simplest increasing profile."""
    return DurationFn(base=1, growth=2, cap_round=1, lin_step=1)


def make_node(pid=0, n=4, f=1, lookback=2, universe=None, duration=None,
              pull_interval=150_000, t0=0) -> ProcessNode:
    cfg = CommitteeConfig(n, f, lookback, tuple(universe or range(n)), GSEED)
    return ProcessNode(pid, Genesis(t0, GSEED, lookback), cfg,
                       duration or lin3(), pull_interval)


def proposal_at(node, rnd=1, value=None, er=0, pqc=None, eqc=None, sender=None):
    """A proposal valid from `node`'s point of view at its current level."""
    level = node.level
    sender = node.proposer_at(level, rnd) if sender is None else sender
    if value is None:
        value = Value(sender, level, rnd, 100 + rnd)
    payload = ProposePayload(eqc if eqc is not None else node.head_certificate,
                             value, er, pqc)
    return make_message(MsgKind.PROPOSE, sender, level, rnd, node.head_hash, payload)


def vote_msg(kind, signer, level, rnd, pred_hash, value):
    return make_message(kind, signer, level, rnd, pred_hash, hash_of(value))


def qc_of(kind: QCKind, level, rnd, pred_hash, value_hash, signers):
    votes = [Signature(s, vote_digest(kind, s, level, rnd, pred_hash, value_hash))
             for s in signers]
    return make_qc(kind, level, rnd, pred_hash, value_hash, votes)


@pytest.fixture(scope="session")
def fault_free_trace():
    return run_sim(make_config(seed=1, target_level=4, name="fault-free"))


@pytest.fixture(scope="session")
def genesis_block():
    return make_genesis_block(Genesis(0, GSEED, 2))
