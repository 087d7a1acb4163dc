"""Execution traces: the ordered envelope log, node snapshots, transitions,
outputs, and per-node bit counters produced by one engine run.

File format: line-delimited JSON.  First line is a versioned header carrying
the full config echo and seed; then one record per envelope / snapshot /
transition / output, closed by a summary record.  Re-running the engine from
the header reproduces the file byte-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

from .messages import Envelope, envelope_from_json, envelope_to_json

TRACE_VERSION = 1

OUTCOME_ALL = "all-output"
OUTCOME_NONE = "no-output"
OUTCOME_PARTIAL = "partial-output"


@dataclass
class ExecutionTrace:
    config: dict
    seed: int
    envs: list[Envelope] = field(default_factory=list)
    snaps: list[dict] = field(default_factory=list)
    transitions: list[dict] = field(default_factory=list)
    outputs: dict[int, dict] = field(default_factory=dict)
    bits: dict[int, dict[str, int]] = field(default_factory=dict)
    rounds: int = 0
    steps: int = 0
    depth: int = 0
    outcome: str = OUTCOME_NONE
    liveness_failure: Optional[str] = None
    node_violations: list[dict] = field(default_factory=list)

    # recording -------------------------------------------------------------

    def record_send(self, env: Envelope) -> None:
        per = self.bits.setdefault(env.sender, {})
        per[env.tag] = per.get(env.tag, 0) + env.bits

    def record_env(self, env: Envelope) -> None:
        self.envs.append(env)

    def record_snap(self, round_or_step: int, node: int, data: dict) -> None:
        self.snaps.append({"at": round_or_step, "node": node, "data": data})

    def record_transition(self, node: int, kind: str, at: int, data: Any) -> None:
        self.transitions.append({"node": node, "kind": kind, "at": at, "data": data})

    def record_output(self, node: int, value: Optional[bytes], at: int,
                      depth: int = 0) -> None:
        self.outputs[node] = {
            "value": None if value is None else value.hex(),
            "at": at, "depth": depth,
        }

    def finalize(self, honest: set[int]) -> None:
        decided = {i for i in honest if i in self.outputs}
        if decided == honest and honest:
            self.outcome = OUTCOME_ALL
        elif decided:
            self.outcome = OUTCOME_PARTIAL
        else:
            self.outcome = OUTCOME_NONE
        if self.outputs:
            self.depth = max(o["depth"] for o in self.outputs.values())

    # queries ---------------------------------------------------------------

    @property
    def corrupt(self) -> set[int]:
        return set(self.config.get("corrupt", ()))

    @property
    def honest(self) -> set[int]:
        return set(range(1, self.config["n"] + 1)) - self.corrupt

    def honest_outputs(self) -> dict[int, Optional[bytes]]:
        out = {}
        for i in self.honest:
            if i in self.outputs:
                v = self.outputs[i]["value"]
                out[i] = None if v is None else bytes.fromhex(v)
        return out

    def total_bits(self) -> int:
        return sum(sum(tags.values()) for tags in self.bits.values())

    def node_bits(self, node: int) -> int:
        return sum(self.bits.get(node, {}).values())

    def bits_by_tag(self) -> dict[str, int]:
        agg: dict[str, int] = {}
        for tags in self.bits.values():
            for tag, b in tags.items():
                agg[tag] = agg.get(tag, 0) + b
        return agg

    def last_snapshots(self) -> dict[int, dict]:
        last: dict[int, dict] = {}
        for rec in self.snaps:
            last[rec["node"]] = rec["data"]
        return last

    # serialization ----------------------------------------------------------

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "header", "version": TRACE_VERSION,
                             "config": self.config, "seed": self.seed},
                            sort_keys=True)]
        for env in self.envs:
            lines.append(json.dumps(envelope_to_json(env), sort_keys=True))
        for rec in self.snaps:
            lines.append(json.dumps({"type": "snap", **rec}, sort_keys=True))
        for rec in self.transitions:
            lines.append(json.dumps({"type": "transition", **rec}, sort_keys=True))
        for node in sorted(self.outputs):
            lines.append(json.dumps({"type": "output", "node": node,
                                     **self.outputs[node]}, sort_keys=True))
        lines.append(json.dumps({
            "type": "summary", "rounds": self.rounds, "steps": self.steps,
            "depth": self.depth, "outcome": self.outcome,
            "liveness_failure": self.liveness_failure,
            "node_violations": self.node_violations,
            "bits": {str(k): v for k, v in sorted(self.bits.items())},
        }, sort_keys=True))
        return "\n".join(lines) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "ExecutionTrace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty trace")
        header = json.loads(lines[0])
        if header.get("type") != "header" or header.get("version") != TRACE_VERSION:
            raise ValueError("bad trace header")
        trace = cls(config=header["config"], seed=header["seed"])
        for ln in lines[1:]:
            rec = json.loads(ln)
            kind = rec.get("type")
            if kind == "env":
                trace.envs.append(envelope_from_json(rec))
            elif kind == "snap":
                trace.snaps.append({"at": rec["at"], "node": rec["node"],
                                    "data": rec["data"]})
            elif kind == "transition":
                trace.transitions.append({"node": rec["node"], "kind": rec["kind"],
                                          "at": rec["at"], "data": rec["data"]})
            elif kind == "output":
                trace.outputs[rec["node"]] = {"value": rec["value"], "at": rec["at"],
                                              "depth": rec["depth"]}
            elif kind == "summary":
                trace.rounds = rec["rounds"]
                trace.steps = rec["steps"]
                trace.depth = rec["depth"]
                trace.outcome = rec["outcome"]
                trace.liveness_failure = rec.get("liveness_failure")
                trace.node_violations = rec.get("node_violations", [])
                trace.bits = {int(k): v for k, v in rec["bits"].items()}
            else:
                raise ValueError(f"unknown trace record type {kind!r}")
        return trace

    @classmethod
    def load(cls, path: str) -> "ExecutionTrace":
        with open(path) as fh:
            return cls.from_jsonl(fh.read())
