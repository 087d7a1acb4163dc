"""Synchronous binary Byzantine agreement, phase-king style.

t+1 phases of three rounds each: two universal exchanges then a king round,
kings being nodes 1..t+1 in index order.  Graded thresholds (all counted over
n with missing votes as 0):

* first exchange: lock d = v when v has >= n-t votes, else d is undecided (2);
* second exchange: e = v when v has >= t+1 locked supporters (at most one v
  can), strong when v has >= n-t;
* king round: keep e when strong, otherwise adopt the king's value.

Deterministic 3(t+1)-round schedule; every honest node decides after the last
phase.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import messages as M
from .messages import Envelope

UNDECIDED = 2


@dataclass
class BbaNode:
    node_id: int
    n: int
    t: int
    vote: int
    proto: str = "bba:0"

    def __post_init__(self) -> None:
        if self.vote not in (0, 1):
            raise ValueError("vote must be binary")
        self.estimate = self.vote
        self.phase = 1
        self._graded = UNDECIDED
        self._strong = False
        self.decision: Optional[int] = None
        self.done = False
        self.estimates_log: list[int] = [self.estimate]

    @property
    def total_rounds(self) -> int:
        return 3 * (self.t + 1)

    def king_of(self, phase: int) -> int:
        return phase

    def _broadcast(self, tag: str, value: int, phase: int) -> list[Envelope]:
        return [Envelope(self.proto, tag, self.node_id, j, value, meta=phase)
                for j in range(1, self.n + 1)]

    def start(self) -> list[Envelope]:
        return self._broadcast(M.BBA_V1, self.estimate, 1)

    def end_round(self, rnd: int, inbox: list[Envelope]) -> list[Envelope]:
        """rnd is the 1-based round within this subprotocol."""
        phase = (rnd - 1) // 3 + 1
        sub = (rnd - 1) % 3
        if sub == 0:
            ones = self._tally(inbox, M.BBA_V1, phase, {0, 1}).count(1)
            if ones >= self.n - self.t:
                self._graded = 1
            elif self.n - ones >= self.n - self.t:
                self._graded = 0
            else:
                self._graded = UNDECIDED
            return self._broadcast(M.BBA_V2, self._graded, phase)
        if sub == 1:
            got = self._tally(inbox, M.BBA_V2, phase, {0, 1, UNDECIDED})
            counts = {v: got.count(v) for v in (0, 1)}
            best = max(counts, key=lambda v: (counts[v], v))
            if counts[best] >= self.t + 1:
                self._graded = best
                self._strong = counts[best] >= self.n - self.t
            else:
                self._graded = UNDECIDED
                self._strong = False
            if self.king_of(phase) == self.node_id:
                king_val = self._graded if self._graded != UNDECIDED else 0
                return self._broadcast(M.BBA_KING, king_val, phase)
            return []
        # king round
        king_val = 0
        for env in inbox:
            if (env.tag == M.BBA_KING and env.sender == self.king_of(phase)
                    and env.meta == phase):
                bit = M.parse_bit(env.payload)
                king_val = bit if bit is not None else 0
                break
        if self._strong and self._graded != UNDECIDED:
            self.estimate = self._graded
        else:
            self.estimate = king_val
        self.estimates_log.append(self.estimate)
        if phase == self.t + 1:
            self.decision = self.estimate
            self.done = True
            return []
        self.phase = phase + 1
        return self._broadcast(M.BBA_V1, self.estimate, self.phase)

    def _tally(self, inbox: list[Envelope], tag: str, phase: int,
               valid: set[int]) -> list[int]:
        got: dict[int, int] = {}
        for env in inbox:
            if env.tag != tag or env.meta != phase or env.sender in got:
                continue
            got[env.sender] = env.payload if env.payload in valid else 0
        return [got.get(j, 0) for j in range(1, self.n + 1)]

    @property
    def output(self):
        return self.decision

    def snapshot(self) -> dict:
        return {"phase": self.phase, "b": self.estimate,
                "decision": self.decision}
