"""Communication metrics and complexity-envelope fitting.

Bit counters charge each envelope's information content (see messages.py).
The envelope claims under test:

* agreement total bits  <= C * max(n*l, n*t*log2(t))
* broadcast per-node    <= C * max(l, n*log2(n))

with one fitted constant C per protocol.  Stability is judged around the
geometric-mean ratio: the fit is accepted when every grid cell's ratio lies
within a given factor (default 3x) of C.  t <= 1 cells fall back to the n*l
term alone (log2 of 0 or 1 vanishes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .trace import ExecutionTrace


@dataclass
class MetricsReport:
    total_bits: int
    max_node_bits: int
    max_node: int
    mean_node_bits: float
    bits_by_tag: dict[str, int]
    rounds: int
    steps: int
    depth: int
    outcome: str

    def leader_balance(self, leader: int, trace: ExecutionTrace) -> float:
        """Leader bits over mean node bits; the balance claim bounds this."""
        others = [trace.node_bits(i) for i in range(1, trace.config["n"] + 1)]
        mean = sum(others) / len(others)
        return trace.node_bits(leader) / mean if mean else float("inf")


def collect_metrics(trace: ExecutionTrace) -> MetricsReport:
    n = trace.config["n"]
    per_node = {i: trace.node_bits(i) for i in range(1, n + 1)}
    max_node = max(per_node, key=per_node.get)
    return MetricsReport(
        total_bits=trace.total_bits(),
        max_node_bits=per_node[max_node],
        max_node=max_node,
        mean_node_bits=sum(per_node.values()) / n,
        bits_by_tag=trace.bits_by_tag(),
        rounds=trace.rounds,
        steps=trace.steps,
        depth=trace.depth,
        outcome=trace.outcome,
    )


def agreement_envelope(n: int, t: int, l_bits: int) -> float:
    """Claimed total-bit envelope for the agreement protocol."""
    log_t = math.log2(t) if t >= 2 else 0.0
    return max(n * l_bits, n * t * log_t) or float(n * l_bits)


def broadcast_envelope(n: int, l_bits: int) -> float:
    """Claimed per-node-bit envelope for the broadcast protocol."""
    return max(l_bits, n * math.log2(n))


@dataclass
class ComplexityCell:
    n: int
    t: int
    l_bits: int
    measured: int
    claimed: float

    @property
    def ratio(self) -> float:
        return self.measured / self.claimed


@dataclass
class ComplexityFit:
    protocol: str
    cells: list[ComplexityCell] = field(default_factory=list)

    @property
    def constant(self) -> float:
        """Geometric mean of the per-cell ratios."""
        ratios = [c.ratio for c in self.cells]
        return math.exp(sum(math.log(r) for r in ratios) / len(ratios))

    @property
    def max_ratio(self) -> float:
        return max(c.ratio for c in self.cells)

    @property
    def min_ratio(self) -> float:
        return min(c.ratio for c in self.cells)

    def stability(self) -> float:
        """Worst deviation factor of any cell from the fitted constant."""
        c = self.constant
        return max(self.max_ratio / c, c / self.min_ratio)

    def stable_within(self, factor: float = 3.0) -> bool:
        return self.stability() < factor

    def rows(self) -> list[dict]:
        return [{"n": c.n, "t": c.t, "l": c.l_bits, "bits": c.measured,
                 "claimed": round(c.claimed, 1), "ratio": round(c.ratio, 3)}
                for c in self.cells]

    def summary(self) -> dict:
        return {
            "protocol": self.protocol,
            "cells": len(self.cells),
            "fitted_constant": round(self.constant, 3),
            "max_ratio": round(self.max_ratio, 3),
            "min_ratio": round(self.min_ratio, 3),
            "stability": round(self.stability(), 3),
        }
