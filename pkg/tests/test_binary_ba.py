"""Phase-king binary agreement: validity, agreement, persistence, round count.

The n=4, t=1 sweep is exhaustive over the adversary's per-round message
choices for one corrupt node (every combination of bits to every receiver in
every round would explode; the sweep covers every per-receiver bit pattern
independently per round, which includes every equivocation the king rounds
can see).
"""

import itertools
import random

import pytest

from codedbft.adversary import AdversarySpec
from codedbft import messages as M
from codedbft.binary_ba import BbaNode
from codedbft.coding import CodeParams
from codedbft.engine import run_sync
from codedbft.invariants import check_invariants


def params(n, t):
    return CodeParams.make(n, t, max_payload=4)


def run_bba(n, t, bits, adversary=None, seed=0):
    trace = run_sync("bba", params(n, t), bits, adversary, seed)
    decisions = {i: v[0] for i, v in trace.honest_outputs().items()}
    return trace, decisions


def test_unanimous_one_no_faults():
    trace, decisions = run_bba(4, 1, {i: 1 for i in range(1, 5)})
    assert set(decisions.values()) == {1}
    assert trace.rounds == 3 * 2


def test_unanimous_zero_with_liar():
    bits = {1: 0, 2: 0, 3: 0, 4: 1}
    trace, decisions = run_bba(4, 1, bits,
                               AdversarySpec(corrupt=(4,), strategy="si-flip"))
    assert all(decisions[i] == 0 for i in (1, 2, 3))
    assert not check_invariants(trace)


PATTERNS = {
    "zero": lambda r: 0,
    "one": lambda r: 1,
    "parity": lambda r: r % 2,
    "antiparity": lambda r: 1 - r % 2,
    "silent": None,
}


def test_exhaustive_adversary_n4():
    """Every per-round bit pattern combination for the corrupt node at n=4, t=1.

    Each of the 6 rounds independently uses one of: all-0, all-1, split by
    receiver parity (both ways), or withhold.  5^6 = 15625 executions per
    honest-bit assignment; agreement must hold in all, and validity whenever
    the honest bits are unanimous.
    """
    p = params(4, 1)
    honest_bit_sets = [{1: 1, 2: 1, 3: 1}, {1: 0, 2: 0, 3: 0}, {1: 1, 2: 0, 3: 1}]
    checked = 0
    for honest_bits in honest_bit_sets:
        for combo in itertools.product(PATTERNS, repeat=6):
            table = {}
            for rnd, pat in enumerate(combo, start=1):
                fn = PATTERNS[pat]
                if fn is None:
                    continue
                for r in (1, 2, 3, 4):
                    table[(rnd, r)] = fn(r)
            spec = AdversarySpec(corrupt=(4,), strategy="scripted",
                                 params={"table": table})
            bits = dict(honest_bits)
            bits[4] = 1
            trace = run_sync("bba", p, bits, spec, seed=0, snapshots="none")
            decisions = {i: v[0] for i, v in trace.honest_outputs().items()}
            assert len(set(decisions.values())) == 1, (honest_bits, combo, decisions)
            hb = set(honest_bits.values())
            if len(hb) == 1:
                assert set(decisions.values()) == hb, (honest_bits, combo)
            checked += 1
    assert checked == len(honest_bit_sets) * len(PATTERNS) ** 6


def test_agreement_under_randomized_equivocation():
    rng = random.Random(42)
    for n, t in [(4, 1), (7, 2)]:
        p = params(n, t)
        for trial in range(30):
            bits = {i: rng.randrange(2) for i in range(1, n + 1)}
            corrupt = tuple(rng.sample(range(1, n + 1), t))
            trace = run_sync("bba", p, bits,
                             AdversarySpec(corrupt=corrupt, strategy="si-flip"),
                             seed=trial)
            decisions = {i: v[0] for i, v in trace.honest_outputs().items()}
            assert len(set(decisions.values())) == 1, (n, trial, decisions)


def test_persistence_of_unanimous_estimate():
    # once every honest node holds the same estimate at a phase start, it
    # never changes, whatever the kings do
    p = params(7, 2)
    bits = {i: 1 for i in range(1, 8)}
    trace = run_sync("bba", p, bits,
                     AdversarySpec(corrupt=(1, 2), strategy="si-flip"), seed=3)
    for rec in trace.transitions:
        if rec["kind"] == "bba-decision" and rec["node"] in trace.honest:
            assert all(b == 1 for b in rec["data"]["estimates"])


def test_round_count_deterministic():
    for n, t in [(4, 1), (7, 2), (10, 3)]:
        trace, _ = run_bba(n, t, {i: i % 2 for i in range(1, n + 1)})
        assert trace.rounds == 3 * (t + 1)


def test_king_round_message_shape():
    trace, _ = run_bba(4, 1, {i: 1 for i in range(1, 5)})
    kings = [e for e in trace.envs if e.tag == M.BBA_KING]
    assert {e.sender for e in kings if e.meta == 1} == {1}
    assert {e.sender for e in kings if e.meta == 2} == {2}


def test_invalid_vote_rejected():
    with pytest.raises(ValueError):
        BbaNode(1, 4, 1, 2)
