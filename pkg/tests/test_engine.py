"""Engines: determinism, fairness, containment, liveness accounting."""

import pytest

from codedbft import messages as M
from codedbft.adversary import AdversarySpec
from codedbft.coding import CodeParams
from codedbft.engine import SchedulerPolicy, explore_async, run_async, run_sync
from codedbft.invariants import check_invariants
from codedbft.trace import ExecutionTrace

W = b"determin"


def params(n, t):
    return CodeParams.make(n, t, max_payload=8)


def test_sync_replay_determinism():
    p = params(7, 2)
    inputs = {i: W for i in range(1, 8)}
    spec = AdversarySpec(corrupt=(6, 7), strategy="random-bytes")
    a = run_sync("cool", p, inputs, spec, seed=9)
    b = run_sync("cool", p, inputs, spec, seed=9)
    assert a.to_jsonl() == b.to_jsonl()
    c = run_sync("cool", p, inputs, spec, seed=10)
    assert c.to_jsonl() != a.to_jsonl()


def test_async_replay_determinism():
    p = params(4, 1)
    spec = AdversarySpec(corrupt=(4,), strategy="equivocate-symbols")
    pol = SchedulerPolicy("seeded-random", fairness=8)
    a = run_async("rbc-balanced", p, W, spec, pol, seed=21)
    b = run_async("rbc-balanced", p, W, spec, pol, seed=21)
    assert a.to_jsonl() == b.to_jsonl()


def test_trace_serialization_round_trip(tmp_path):
    p = params(4, 1)
    trace = run_async("rbc-unbalanced", p, W, AdversarySpec(),
                      SchedulerPolicy("fifo"), seed=0)
    path = tmp_path / "t.jsonl"
    trace.save(str(path))
    loaded = ExecutionTrace.load(str(path))
    assert loaded.to_jsonl() == trace.to_jsonl()
    assert loaded.honest_outputs() == trace.honest_outputs()


def test_fairness_bound_respected():
    p = params(4, 1)
    for b in (1, 8, 64):
        pol = SchedulerPolicy("seeded-random", fairness=b)
        trace = run_async("rbc-balanced", p, W, AdversarySpec(), pol, seed=5)
        assert not [v for v in check_invariants(trace) if v.kind == "fairness"]
        assert trace.outcome == "all-output"


def test_adversarial_delay_respects_fairness():
    p = params(7, 2)
    pol = SchedulerPolicy("adversarial-delay", fairness=8, targets=(2, 3))
    trace = run_async("rbc-balanced", p, W, AdversarySpec(), pol, seed=5)
    assert not check_invariants(trace)


def test_adversary_containment():
    # no envelope in the trace carries an honest sender with a transformed payload
    p = params(7, 2)
    inputs = {i: W for i in range(1, 8)}
    trace = run_sync("cool", p, inputs,
                     AdversarySpec(corrupt=(6, 7), strategy="random-bytes"), seed=2)
    for env in trace.envs:
        if env.sender in trace.honest and env.tag == M.SYMBOL:
            assert isinstance(env.payload, tuple)
    assert not [v for v in check_invariants(trace) if v.kind == "containment"]


def test_rushing_adversary_sees_current_round():
    # the mimic strategy copies honest payloads of the same round, which is
    # only possible with rushing visibility
    p = params(4, 1)
    inputs = {i: W for i in range(1, 5)}
    trace = run_sync("cool", p, inputs,
                     AdversarySpec(corrupt=(4,), strategy="scripted-rushing"), seed=0)
    round1 = [e for e in trace.envs if e.deliver_mark == 1 and e.tag == M.SYMBOL]
    honest1 = {e.receiver: e.payload for e in round1 if e.sender == 1}
    corrupt1 = {e.receiver: e.payload for e in round1 if e.sender == 4}
    assert corrupt1 and all(corrupt1[r] == honest1[r] for r in corrupt1)


def test_round_cap_trips_liveness():
    p = params(4, 1)
    inputs = {i: W for i in range(1, 5)}
    trace = run_sync("cool", p, inputs, seed=0, round_cap=2)
    assert trace.liveness_failure is not None
    assert any(v.kind == "liveness" for v in check_invariants(trace))


def test_step_cap_trips_liveness():
    p = params(4, 1)
    trace = run_async("rbc-balanced", p, W, AdversarySpec(),
                      SchedulerPolicy("fifo"), seed=0, step_cap=5)
    assert trace.liveness_failure is not None


def test_byzantine_leader_no_output_vacuously_safe():
    # a silent corrupt leader yields a no-output run, which is not a liveness
    # failure by the broadcast definition
    p = params(4, 1)
    trace = run_async("rbc-balanced", p, W,
                      AdversarySpec(corrupt=(1,), strategy="silent"),
                      SchedulerPolicy("fifo"), seed=0, leader_id=1)
    assert trace.outcome == "no-output"
    assert trace.liveness_failure is None
    assert not check_invariants(trace)


def test_exploration_small_honest():
    p = CodeParams.make(4, 1, max_payload=1)
    rep = explore_async(p, b"\x5a", variant="unbalanced", corrupt=(),
                        max_states=8000)
    assert rep.terminals > 0
    assert not rep.violations


def test_exploration_with_adversary_alphabet():
    from codedbft.cli import exploration_alternatives
    p = CodeParams.make(4, 1, max_payload=1)
    rep = explore_async(p, b"\x5a", variant="unbalanced", corrupt=(3,),
                        alternatives=exploration_alternatives(p),
                        max_states=8000)
    assert not rep.violations


def test_subresilient_flag_async():
    p = CodeParams.make(5, 2, max_payload=8)
    with pytest.raises(ValueError):
        run_async("rbc-balanced", p, W, seed=0)
    trace = run_async("rbc-balanced", p, W, seed=0, allow_subresilient=True)
    assert trace.steps > 0
