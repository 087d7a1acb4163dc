"""Deterministic execution engines.

``run_sync`` drives the round-based protocols (cool / bua / bba) in lock
step with a full-information rushing adversary: corrupt nodes see the honest
envelopes of the current round before their own are fixed.  ``run_async``
drives reliable-broadcast nodes through a delivery queue ordered by a
scheduler policy.  ``explore_async`` enumerates delivery schedules (and
corrupt payload choices) of a small instance exhaustively with state
deduplication.

Fairness in the async engine is an overtake bound: an honest-to-honest
envelope may be overtaken by at most B envelopes sent after it.  Any finite B
realizes eventual delivery; FIFO satisfies every B.

Identical (config, seed) reproduces a byte-identical trace.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .adversary import AdversarySpec, make_strategy
from .binary_ba import BbaNode
from .bua import BuaNode
from .coding import CodeParams, CodedSymbol
from .cool import CoolNode
from .messages import Envelope
from .rbc import BALANCED, UNBALANCED, RbcNode
from .trace import ExecutionTrace

SYNC_PROTOCOLS = ("cool", "bua", "bba")
ASYNC_PROTOCOLS = ("rbc-balanced", "rbc-unbalanced")


def sync_round_cap(t: int) -> int:
    return 10 * (4 + 3 * (t + 1))


@dataclass
class SchedulerPolicy:
    kind: str = "fifo"                 # fifo | seeded-random | adversarial-delay
    fairness: int = 64                 # overtake bound B
    targets: tuple[int, ...] = ()      # delayed nodes for adversarial-delay

    def validate(self) -> None:
        if self.kind not in ("fifo", "seeded-random", "adversarial-delay"):
            raise ValueError(f"unknown scheduler kind {self.kind!r}")
        if self.fairness < 1:
            raise ValueError("fairness bound must be >= 1")


def _mkrng(seed: int, label: str) -> random.Random:
    return random.Random(f"{seed}/{label}")


# -- synchronous engine -------------------------------------------------------


def _build_sync_node(protocol: str, i: int, params: CodeParams, inputs: dict,
                     instance: str):
    proto = f"{protocol}:{instance}"
    if protocol == "cool":
        return CoolNode(i, params, inputs[i], proto=proto)
    if protocol == "bua":
        return BuaNode(i, params, inputs[i], proto=proto)
    if protocol == "bba":
        return BbaNode(i, params.n, params.t, inputs[i], proto=proto)
    raise ValueError(f"unknown sync protocol {protocol!r}")


def _sync_output_value(protocol: str, node) -> Optional[bytes]:
    if protocol == "cool":
        return node.output
    if protocol == "bua":
        return node.result.value
    return bytes([node.decision])


def run_sync(protocol: str, params: CodeParams, inputs: dict,
             adversary: Optional[AdversarySpec] = None, seed: int = 0, *,
             instance: str = "0", round_cap: Optional[int] = None,
             allow_subresilient: bool = False,
             snapshots: str = "final") -> ExecutionTrace:
    """Lock-step execution to unanimous honest termination or the round cap."""
    if protocol not in SYNC_PROTOCOLS:
        raise ValueError(f"not a synchronous protocol: {protocol}")
    n, t = params.n, params.t
    spec = adversary or AdversarySpec()
    spec.validate(n, t)
    if n < 3 * t + 1 and not allow_subresilient:
        raise ValueError(f"n={n} < 3t+1={3 * t + 1}; pass allow_subresilient to override")
    corrupt = set(spec.corrupt)
    honest = set(range(1, n + 1)) - corrupt
    strategy = make_strategy(spec, params, seed)
    nodes = {i: _build_sync_node(protocol, i, params, inputs, instance)
             for i in range(1, n + 1)}
    config = {
        "protocol": protocol, "n": n, "t": t, "k": params.k, "c": params.c,
        "msg_bits": params.msg_bits, "instance": instance,
        "corrupt": sorted(corrupt), "strategy": spec.strategy,
        "policy": None, "fairness": None, "seed": seed,
        "inputs": {str(i): (inputs[i].hex() if isinstance(inputs[i], bytes) else inputs[i])
                   for i in inputs},
        "allow_subresilient": allow_subresilient,
    }
    trace = ExecutionTrace(config=config, seed=seed)
    outbox = {i: nodes[i].start() for i in range(1, n + 1)}
    recorded: set[int] = set()
    marked: dict[int, set[str]] = {i: set() for i in range(1, n + 1)}
    cap = round_cap if round_cap is not None else sync_round_cap(t)
    rnd = 0
    while rnd < cap:
        if all(nodes[i].done for i in honest):
            break
        rnd += 1
        honest_envs = [e for i in sorted(honest) for e in outbox[i]]
        corrupt_base = [e for i in sorted(corrupt) for e in outbox[i]]
        corrupt_envs = [e for e in strategy.transform_round(rnd, honest_envs, corrupt_base)
                        if e.sender in corrupt]
        inboxes: dict[int, list[Envelope]] = {i: [] for i in range(1, n + 1)}
        for env in honest_envs + corrupt_envs:
            env.send_mark, env.deliver_mark = rnd - 1, rnd
            trace.record_send(env)
            trace.record_env(env)
            if 1 <= env.receiver <= n:
                inboxes[env.receiver].append(env)
        for i in inboxes:
            inboxes[i].sort(key=lambda e: (e.sender, e.tag, e.meta if e.meta else 0))
        for i in range(1, n + 1):
            node = nodes[i]
            if node.done:
                outbox[i] = []
                continue
            outbox[i] = node.end_round(rnd, inboxes[i]) or []
            _record_sync_progress(trace, protocol, node, i, rnd, marked[i])
            if snapshots == "all":
                trace.record_snap(rnd, i, node.snapshot())
            if node.done and i not in recorded:
                recorded.add(i)
                violation = getattr(node, "violation", None)
                if violation:
                    trace.node_violations.append({"node": i, "detail": violation})
                else:
                    trace.record_output(i, _sync_output_value(protocol, node), rnd)
    trace.rounds = rnd
    if not all(nodes[i].done for i in honest):
        trace.liveness_failure = f"round cap {cap} exceeded"
    if snapshots != "none":
        for i in range(1, n + 1):
            trace.record_snap(rnd, i, nodes[i].snapshot())
    trace.finalize(honest)
    return trace


def _record_sync_progress(trace: ExecutionTrace, protocol: str, node, i: int,
                          rnd: int, marked: set[str]) -> None:
    bua = node if protocol == "bua" else getattr(node, "bua", None)
    if isinstance(bua, BuaNode) and bua.done and "bua" not in marked:
        marked.add("bua")
        res = bua.result
        trace.record_transition(i, "bua-output", rnd, {
            "w": None if res.value is None else res.value.hex(),
            "s": res.success, "v": res.vote,
            "s1": sorted(res.s1), "s0": sorted(res.s0)})
    bba = node if protocol == "bba" else getattr(node, "bba", None)
    if isinstance(bba, BbaNode) and bba.done and "bba" not in marked:
        marked.add("bba")
        trace.record_transition(i, "bba-decision", rnd, {
            "d": bba.decision, "estimates": list(bba.estimates_log)})


# -- asynchronous engine ------------------------------------------------------


class _Queue:
    """Pending-envelope pool with overtake-bounded fair picking."""

    def __init__(self, policy: SchedulerPolicy, rng: random.Random):
        self.policy = policy
        self.rng = rng
        self.items: list[Envelope] = []
        self.overtakes: dict[int, int] = {}

    def push(self, env: Envelope) -> None:
        self.items.append(env)
        self.overtakes[id(env)] = 0

    def __len__(self) -> int:
        return len(self.items)

    def _forced(self, honest: set[int]) -> Optional[int]:
        b = self.policy.fairness
        best = None
        for idx, env in enumerate(self.items):
            if env.sender in honest and env.receiver in honest \
                    and self.overtakes[id(env)] >= b:
                if best is None or env.send_mark < self.items[best].send_mark:
                    best = idx
        return best

    def pick(self, honest: set[int]) -> Envelope:
        idx = self._forced(honest)
        if idx is None:
            kind = self.policy.kind
            if kind == "fifo":
                idx = 0
            elif kind == "seeded-random":
                idx = self.rng.randrange(len(self.items))
            else:  # adversarial-delay
                targets = set(self.policy.targets)
                idx = next((i for i, e in enumerate(self.items)
                            if e.sender not in targets and e.receiver not in targets), 0)
        env = self.items.pop(idx)
        for other in self.items:
            if other.send_mark < env.send_mark:
                self.overtakes[id(other)] += 1
        del self.overtakes[id(env)]
        return env


def run_async(protocol: str, params: CodeParams, leader_value: bytes,
              adversary: Optional[AdversarySpec] = None,
              policy: Optional[SchedulerPolicy] = None, seed: int = 0, *,
              leader_id: int = 1, instance: str = "0",
              step_cap: int = 10 ** 6,
              allow_subresilient: bool = False) -> ExecutionTrace:
    """Event-loop execution until every honest node outputs, the queue drains,
    or the step cap trips."""
    if protocol not in ASYNC_PROTOCOLS:
        raise ValueError(f"not an asynchronous protocol: {protocol}")
    variant = BALANCED if protocol == "rbc-balanced" else UNBALANCED
    n, t = params.n, params.t
    spec = adversary or AdversarySpec()
    spec.validate(n, t)
    if n < 3 * t + 1 and not allow_subresilient:
        raise ValueError(f"n={n} < 3t+1={3 * t + 1}; pass allow_subresilient to override")
    policy = policy or SchedulerPolicy()
    policy.validate()
    corrupt = set(spec.corrupt)
    honest = set(range(1, n + 1)) - corrupt
    strategy = make_strategy(spec, params, seed, leader_id, variant)
    if leader_id in corrupt:
        strategy.leader_value = leader_value
    nodes = {i: RbcNode(i, params, leader_id, variant, instance)
             for i in range(1, n + 1)}
    config = {
        "protocol": protocol, "n": n, "t": t, "k": params.k, "c": params.c,
        "msg_bits": params.msg_bits, "instance": instance,
        "corrupt": sorted(corrupt), "strategy": spec.strategy,
        "policy": policy.kind, "fairness": policy.fairness,
        "targets": sorted(policy.targets), "seed": seed,
        "leader": leader_id, "leader_value": leader_value.hex(),
        "allow_subresilient": allow_subresilient,
    }
    trace = ExecutionTrace(config=config, seed=seed)
    queue = _Queue(policy, _mkrng(seed, "sched"))
    depth = {i: 0 for i in range(1, n + 1)}
    step = 0

    def submit(sender: int, envs: list[Envelope]) -> None:
        for env in envs:
            if env.sender != sender and env.sender not in corrupt:
                continue  # adversary may only forge corrupt senders
            env.send_mark = step
            env.depth = depth[env.sender] + 1 if env.sender in honest else 0
            trace.record_send(env)
            queue.push(env)

    start_out = nodes[leader_id].start(leader_value)
    if leader_id in corrupt:
        start_out = strategy.transform_send(start_out)
    submit(leader_id, start_out)

    while len(queue) and step < step_cap:
        if all(nodes[i].done for i in honest):
            break
        env = queue.pick(honest)
        if env.receiver in honest and nodes[env.receiver].done:
            continue  # terminated nodes accept no new input
        step += 1
        env.deliver_mark = step
        trace.record_env(env)
        r = env.receiver
        if r in corrupt:
            base = nodes[r].handle(env)
            outs = strategy.transform_send(base) + strategy.on_deliver(env)
            submit(r, outs)
            continue
        if env.sender in honest:
            depth[r] = max(depth[r], env.depth)
        node = nodes[r]
        was_done = node.done
        outs = node.handle(env)
        submit(r, outs)
        if node.done and not was_done:
            trace.record_output(r, node.output, step, depth=depth[r] + 1)

    trace.steps = step
    decided = {i for i in honest if nodes[i].done}
    if step >= step_cap:
        trace.liveness_failure = f"step cap {step_cap} exceeded"
    elif decided and decided != honest and not len(queue):
        trace.liveness_failure = "queue exhausted with partial honest outputs"
    trace.finalize(honest)
    for i in range(1, n + 1):
        trace.record_snap(step, i, nodes[i].snapshot())
    return trace


# -- bounded exhaustive exploration -------------------------------------------


@dataclass
class ExplorationReport:
    states: int = 0
    terminals: int = 0
    violations: list[str] = field(default_factory=list)
    capped: bool = False


def _flat_payload(payload):
    if isinstance(payload, CodedSymbol):
        return (payload.index, payload.lanes)
    if isinstance(payload, tuple):
        return tuple(_flat_payload(p) for p in payload)
    return payload


def _env_key(env: Envelope):
    key = getattr(env, "_ekey", None)
    if key is None:
        key = (env.sender, env.receiver, env.tag, env.meta,
               _flat_payload(env.payload))
        env._ekey = key
    return key


def _node_digest(node) -> bytes:
    d = getattr(node, "_digest", None)
    if d is None:
        d = hashlib.blake2b(repr(node.state_key()).encode(), digest_size=12).digest()
        node._digest = d
    return d


def _state_digest(nodes: dict, pending: tuple) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for i in sorted(nodes):
        h.update(_node_digest(nodes[i]))
    h.update(repr(pending).encode())
    return h.digest()


def explore_async(params: CodeParams, leader_value: bytes, *,
                  variant: str = UNBALANCED, leader_id: int = 1,
                  corrupt: tuple[int, ...] = (),
                  alternatives: Optional[Callable[[Envelope], list]] = None,
                  max_states: int = 200_000) -> ExplorationReport:
    """Exhaustive DFS over delivery orders (and corrupt payload choices) of a
    small instance, deduplicating on canonical global state.

    ``alternatives(env)`` maps a corrupt-sent envelope to the payload choices
    the adversary may substitute; delivery of such an envelope branches over
    them.  Safety is asserted at every quiescent (drained-queue) state.
    """
    n = params.n
    corrupt_set = set(corrupt)
    honest = set(range(1, n + 1)) - corrupt_set
    report = ExplorationReport()
    seen: set[bytes] = set()

    def snapshot_nodes(nodes):
        return {i: node.clone() for i, node in nodes.items()}

    def check_terminal(nodes) -> None:
        report.terminals += 1
        outs = {i: nodes[i].output for i in honest if nodes[i].done}
        if len({v.hex() if isinstance(v, bytes) else v for v in outs.values()}) > 1:
            report.violations.append(f"consistency: {outs}")
        if outs and len(outs) != len(honest):
            report.violations.append(f"totality: {sorted(outs)} of {sorted(honest)}")
        if leader_id in honest and outs and any(v != leader_value for v in outs.values()):
            report.violations.append(f"validity: {outs}")

    def dfs(nodes, pending: list[Envelope]) -> None:
        if report.states >= max_states:
            report.capped = True
            return
        live = [e for e in pending
                if not (e.receiver in honest and nodes[e.receiver].done)]
        key = _state_digest(nodes, tuple(sorted(_env_key(e) for e in live)))
        if key in seen:
            return
        seen.add(key)
        report.states += 1
        if not live or all(nodes[i].done for i in honest):
            check_terminal(nodes)
            if not live:
                return
        chosen: set = set()
        for env in live:
            ek = _env_key(env)
            if ek in chosen:
                continue
            chosen.add(ek)
            payload_choices = [env.payload]
            if env.sender in corrupt_set and alternatives is not None:
                payload_choices = alternatives(env)
            for payload in payload_choices:
                child = snapshot_nodes(nodes)
                rest = [e for e in live if e is not env]
                deliver = Envelope(env.proto, env.tag, env.sender, env.receiver,
                                   payload, meta=env.meta)
                target = child[env.receiver]
                outs = target.handle(deliver)
                target._digest = None
                dfs(child, rest + outs)

    nodes = {i: RbcNode(i, params, leader_id, variant) for i in range(1, n + 1)}
    first = nodes[leader_id].start(leader_value)
    dfs(nodes, first)
    return report
