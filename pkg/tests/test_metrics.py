"""Bit accounting, scaling behaviour, and the balance ratio."""

from codedbft import messages as M
from codedbft.adversary import AdversarySpec
from codedbft.coding import CodeParams
from codedbft.engine import SchedulerPolicy, run_async, run_sync
from codedbft.messages import payload_bits
from codedbft.metrics import (agreement_envelope, broadcast_envelope,
                              collect_metrics)


def test_payload_bit_sizes():
    p = CodeParams.make(4, 1, max_payload=8)
    from codedbft.coding import encode_message
    sym = encode_message(p, b"x" * 8)[0]
    assert payload_bits(M.SI1, 1) == 1
    assert payload_bits(M.BBA_V2, 2) == 2
    assert payload_bits(M.LEADER, sym) == 8 * len(sym.lanes)
    assert payload_bits(M.SYMBOL, (sym, sym)) == 16 * len(sym.lanes)
    assert payload_bits(M.LEADER_FULL, b"\x01\x02") == 16 + 16
    assert payload_bits(M.READY, b"\xff") == 8  # raw adversarial bytes


def test_silent_adversary_counts_honest_only():
    p = CodeParams.make(4, 1, max_payload=8)
    inputs = {i: b"\x01" * 8 for i in range(1, 5)}
    trace = run_sync("cool", p, inputs,
                     AdversarySpec(corrupt=(4,), strategy="silent"), seed=0)
    assert trace.node_bits(4) == 0
    assert all(trace.node_bits(i) > 0 for i in (1, 2, 3))


def test_doubling_payload_doubles_bits():
    # beyond the crossover, total bits scale linearly in the payload length
    p8k = CodeParams.make(4, 1, max_payload=1024)
    p16k = CodeParams.make(4, 1, max_payload=2048)
    def total(p, nbytes):
        w = bytes(nbytes % 251 for nbytes in range(nbytes))
        tr = run_sync("cool", p, {i: w for i in range(1, 5)}, seed=0,
                      snapshots="none")
        return tr.total_bits()
    t1, t2 = total(p8k, 1024), total(p16k, 2048)
    assert abs(t2 / t1 - 2.0) < 0.2


def test_balance_leader_close_to_mean():
    p = CodeParams.make(10, 3, max_payload=2048)
    w = bytes(range(256)) * 8
    trace = run_async("rbc-balanced", p, w, AdversarySpec(),
                      SchedulerPolicy("fifo"), seed=0, leader_id=1)
    rep = collect_metrics(trace)
    assert rep.leader_balance(1, trace) <= 2.0


def test_unbalanced_leader_heavier():
    p = CodeParams.make(10, 3, max_payload=2048)
    w = bytes(range(256)) * 8
    tr_b = run_async("rbc-balanced", p, w, AdversarySpec(), SchedulerPolicy(), 0)
    tr_u = run_async("rbc-unbalanced", p, w, AdversarySpec(), SchedulerPolicy(), 0)
    bal_b = collect_metrics(tr_b).leader_balance(1, tr_b)
    bal_u = collect_metrics(tr_u).leader_balance(1, tr_u)
    assert bal_u > bal_b


def test_envelope_formulas():
    assert agreement_envelope(4, 1, 64) == 256.0   # log2(1) term vanishes
    assert agreement_envelope(31, 10, 64) == max(31 * 64, 31 * 10 * 3.321928094887362)
    assert broadcast_envelope(4, 1 << 14) == 1 << 14
    assert broadcast_envelope(31, 64) == 31 * 4.954196310386875


def test_metrics_report_fields():
    p = CodeParams.make(4, 1, max_payload=8)
    trace = run_async("rbc-balanced", p, b"x" * 8, AdversarySpec(),
                      SchedulerPolicy("fifo"), seed=0)
    rep = collect_metrics(trace)
    assert rep.total_bits == trace.total_bits()
    assert rep.depth == 7
    assert rep.outcome == "all-output"
    assert set(rep.bits_by_tag) >= {M.LEADER, M.INITIAL, M.SYMBOL, M.SI1, M.SI2, M.READY}
