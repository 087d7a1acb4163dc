"""Trace-level invariant checker.

Evaluates every protocol guarantee that is observable on a finished trace,
using test-only knowledge of the corrupt set from the trace's config echo.
An empty report is a pass; violations are findings, never exceptions.

Checked per protocol:

* cool/bua   -- termination bound, consistency, validity, unique agreement,
                majority unique agreement, one-group rule (at most one honest
                input value among phase-2 survivors), decision quorum (a
                binary decision of 1 implies at least t+1 honest phase-2
                survivors), link symmetry.
* bba        -- agreement, validity, exact round count.
* rbc        -- consistency + totality, validity under an honest leader,
                READY uniqueness, one-group rule over SI2(1) senders,
                ready-decision agreement, fairness (overtake bound), honest
                payload well-formedness (adversary containment).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import messages as M
from .coding import CodedSymbol
from .trace import ExecutionTrace, OUTCOME_ALL, OUTCOME_NONE


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str
    node: Optional[int] = None

    def __str__(self) -> str:
        where = f" node={self.node}" if self.node is not None else ""
        return f"[{self.kind}]{where} {self.detail}"


def check_invariants(trace: ExecutionTrace) -> list[Violation]:
    protocol = trace.config["protocol"]
    out: list[Violation] = []
    for rec in trace.node_violations:
        if rec.get("node") in trace.honest:
            out.append(Violation("node-invariant", rec["detail"], rec.get("node")))
    if trace.liveness_failure:
        out.append(Violation("liveness", trace.liveness_failure))
    if protocol == "cool":
        out += _check_cool(trace)
    elif protocol == "bua":
        out += _check_bua_defs(trace)
    elif protocol == "bba":
        out += _check_bba(trace)
    elif protocol in ("rbc-balanced", "rbc-unbalanced"):
        out += _check_rbc(trace)
    else:
        out.append(Violation("config", f"unknown protocol {protocol!r}"))
    return out


# -- shared helpers -----------------------------------------------------------


def _honest_inputs(trace: ExecutionTrace) -> dict[int, bytes]:
    inputs = trace.config.get("inputs", {})
    return {i: bytes.fromhex(inputs[str(i)]) for i in trace.honest
            if str(i) in inputs and isinstance(inputs[str(i)], str)}


def _bua_results(trace: ExecutionTrace) -> dict[int, dict]:
    res = {}
    for rec in trace.transitions:
        if rec["kind"] == "bua-output" and rec["node"] in trace.honest:
            res[rec["node"]] = rec["data"]
    return res


def _bba_decisions(trace: ExecutionTrace) -> dict[int, int]:
    return {rec["node"]: rec["data"]["d"] for rec in trace.transitions
            if rec["kind"] == "bba-decision" and rec["node"] in trace.honest}


# -- cool / bua ---------------------------------------------------------------


def _check_cool(trace: ExecutionTrace) -> list[Violation]:
    out: list[Violation] = []
    t = trace.config["t"]
    bound = 4 + 3 * (t + 1)
    undecided = trace.honest - set(trace.outputs)
    if undecided:
        out.append(Violation("termination", f"honest nodes never output: {sorted(undecided)}"))
    late = {i for i, rec in trace.outputs.items()
            if i in trace.honest and rec["at"] > bound}
    if late:
        out.append(Violation("round-bound", f"outputs after round {bound}: {sorted(late)}"))
    outs = trace.honest_outputs()
    if len({v for v in outs.values()}) > 1:
        out.append(Violation("consistency", f"honest outputs differ: {_fmt(outs)}"))
    inputs = _honest_inputs(trace)
    if inputs and len(set(inputs.values())) == 1 and len(inputs) == len(trace.honest):
        w = next(iter(inputs.values()))
        bad = {i for i, v in outs.items() if v != w}
        if bad:
            out.append(Violation("validity", f"unanimous input not decided by {sorted(bad)}"))
    out += _check_bua_defs(trace)
    out += _check_decision_quorum(trace)
    return out


def _check_bua_defs(trace: ExecutionTrace) -> list[Violation]:
    out: list[Violation] = []
    res = _bua_results(trace)
    inputs = _honest_inputs(trace)
    t = trace.config["t"]
    if trace.config["protocol"] == "bua":
        undecided = trace.honest - set(res)
        if undecided:
            out.append(Violation("termination", f"no unique-agreement output: {sorted(undecided)}"))
    winners = {i: r for i, r in res.items() if r["s"] == 1}
    if len({r["w"] for r in winners.values()}) > 1:
        out.append(Violation("unique-agreement",
                             f"conflicting s=1 values: { {i: r['w'] for i, r in winners.items()} }"))
    for i, r in res.items():
        if r["s"] == 1 and r["v"] == 1:
            support = sum(1 for q in res.values() if q["s"] == 1 and q["w"] == r["w"])
            if support < t + 1:
                out.append(Violation("majority-unique-agreement",
                                     f"(w,1,1) at node {i} but only {support} honest (w,1,*)"))
            break
    if inputs and len(set(inputs.values())) == 1 and len(inputs) == len(trace.honest):
        w = next(iter(inputs.values()))
        bad = {i for i, r in res.items()
               if not (r["s"] == 1 and r["v"] == 1 and r["w"] == w.hex())}
        if bad:
            out.append(Violation("bua-validity",
                                 f"unanimous input but not (w,1,1) at {sorted(bad)}"))
    survivor_inputs = {inputs[i].hex() for i, r in res.items()
                       if r["s"] == 1 and i in inputs}
    if len(survivor_inputs) > 1:
        out.append(Violation("one-group", f"phase-2 survivors span inputs {survivor_inputs}"))
    out += _check_symmetry(trace)
    return out


def _check_symmetry(trace: ExecutionTrace) -> list[Violation]:
    snaps = trace.last_snapshots()
    u1 = {}
    for i in trace.honest:
        data = snaps.get(i, {})
        bua = data.get("bua", data)
        if isinstance(bua, dict) and "u1" in bua:
            u1[i] = bua["u1"]
    for i in u1:
        for j in u1:
            if i < j and u1[i][j - 1] != u1[j][i - 1]:
                return [Violation("link-symmetry", f"u_{i}({j}) != u_{j}({i})")]
    return []


def _check_decision_quorum(trace: ExecutionTrace) -> list[Violation]:
    decisions = _bba_decisions(trace)
    if 1 not in decisions.values():
        return []
    res = _bua_results(trace)
    t = trace.config["t"]
    survivors = [i for i, r in res.items() if r["s"] == 1]
    if len(survivors) < t + 1:
        return [Violation("decision-quorum",
                          f"decision 1 with only {len(survivors)} honest phase-2 survivors")]
    return []


def _check_bba(trace: ExecutionTrace) -> list[Violation]:
    out: list[Violation] = []
    t = trace.config["t"]
    decisions = _bba_decisions(trace)
    undecided = trace.honest - set(decisions)
    if undecided:
        out.append(Violation("termination", f"no decision at {sorted(undecided)}"))
    if len(set(decisions.values())) > 1:
        out.append(Violation("agreement", f"decisions differ: {decisions}"))
    inputs = trace.config.get("inputs", {})
    honest_bits = {int(i): b for i, b in inputs.items() if int(i) in trace.honest}
    if honest_bits and len(set(honest_bits.values())) == 1:
        b = next(iter(honest_bits.values()))
        if any(d != b for d in decisions.values()):
            out.append(Violation("bba-validity", f"unanimous {b} but decisions {decisions}"))
    if trace.rounds != 3 * (t + 1):
        out.append(Violation("round-bound",
                             f"binary agreement took {trace.rounds} rounds, expected {3 * (t + 1)}"))
    return out


# -- rbc ----------------------------------------------------------------------


def _check_rbc(trace: ExecutionTrace) -> list[Violation]:
    out: list[Violation] = []
    outs = trace.honest_outputs()
    if outs and len({v for v in outs.values()}) > 1:
        out.append(Violation("consistency", f"honest outputs differ: {_fmt(outs)}"))
    if trace.outcome not in (OUTCOME_ALL, OUTCOME_NONE):
        out.append(Violation("totality",
                             f"{len(outs)} of {len(trace.honest)} honest nodes output"))
    leader = trace.config["leader"]
    if leader in trace.honest:
        w = bytes.fromhex(trace.config["leader_value"])
        if trace.outcome != OUTCOME_ALL:
            out.append(Violation("rbc-validity", "honest leader but missing outputs"))
        bad = {i for i, v in outs.items() if v != w}
        if bad:
            out.append(Violation("rbc-validity", f"honest leader value not output by {sorted(bad)}"))
    out += _check_ready_uniqueness(trace)
    out += _check_vout_agreement(trace)
    out += _check_rbc_one_group(trace)
    out += _check_fairness(trace)
    out += _check_containment(trace)
    return out


def _check_ready_uniqueness(trace: ExecutionTrace) -> list[Violation]:
    bits: dict[int, set] = {}
    for env in trace.envs:
        if env.tag == M.READY and env.sender in trace.honest and env.payload in (0, 1):
            bits.setdefault(env.sender, set()).add(env.payload)
    per_sender = {i: v for i, v in bits.items() if len(v) > 1}
    if per_sender:
        return [Violation("ready-uniqueness", f"honest sender equivocated: {per_sender}")]
    distinct = {next(iter(v)) for v in bits.values()}
    if len(distinct) > 1:
        return [Violation("ready-uniqueness", "two honest nodes sent different READY bits")]
    return []


def _check_vout_agreement(trace: ExecutionTrace) -> list[Violation]:
    vouts = set()
    for rec in trace.snaps:
        if rec["node"] in trace.honest and rec["data"].get("v_out") is not None:
            vouts.add(rec["data"]["v_out"])
    if len(vouts) > 1:
        return [Violation("ready-decision", f"honest ready decisions differ: {vouts}")]
    return []


def _check_rbc_one_group(trace: ExecutionTrace) -> list[Violation]:
    si2_one_senders = {env.sender for env in trace.envs
                       if env.tag == M.SI2 and env.payload == 1
                       and env.sender in trace.honest}
    snaps = trace.last_snapshots()
    group = set(si2_one_senders)
    for i in trace.honest:
        if snaps.get(i, {}).get("si_ph2"):
            group.add(i)
    values = {snaps[i]["w_initial"] for i in group if i in snaps}
    if len(values) > 1:
        return [Violation("one-group", f"SI2(1) group spans inputs {values}")]
    return []


def _check_fairness(trace: ExecutionTrace) -> list[Violation]:
    bound = trace.config.get("fairness")
    if not bound:
        return []
    import bisect
    delivered = [e for e in trace.envs
                 if e.deliver_mark > 0 and e.sender in trace.honest
                 and e.receiver in trace.honest]
    delivered.sort(key=lambda e: e.deliver_mark)
    marks: list[int] = []  # send marks of earlier deliveries, sorted
    for env in delivered:
        overtakes = len(marks) - bisect.bisect_right(marks, env.send_mark)
        if overtakes > bound:
            return [Violation("fairness",
                              f"envelope overtaken {overtakes} times (bound {bound})")]
        bisect.insort(marks, env.send_mark)
    return []


def _check_containment(trace: ExecutionTrace) -> list[Violation]:
    """Honest senders only ever emit schema-valid payloads; a raw-bytes payload
    under an honest sender means something transformed it."""
    for env in trace.envs:
        if env.sender not in trace.honest:
            continue
        if env.tag in M.BIT_TAGS and env.payload not in (0, 1):
            return [Violation("containment", f"honest {env.sender} sent malformed {env.tag}")]
        if env.tag in M.SYM_TAGS and not isinstance(env.payload, CodedSymbol):
            return [Violation("containment", f"honest {env.sender} sent malformed {env.tag}")]
        if env.tag in M.PAIR_TAGS and not (isinstance(env.payload, tuple)
                                           and len(env.payload) == 2):
            return [Violation("containment", f"honest {env.sender} sent malformed {env.tag}")]
    return []


def _fmt(outs: dict[int, Optional[bytes]]) -> str:
    return str({i: (v.hex() if isinstance(v, bytes) else v) for i, v in outs.items()})
