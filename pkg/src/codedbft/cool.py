"""Complete synchronous Byzantine agreement node.

Rounds 1-3 run the unique-agreement core (bua), rounds 4 .. 3+3(t+1) run the
binary vote consensus (binary_ba), and one final round carries the
CORRECT-SYMBOL calibration multicast.  A binary decision of 0 outputs the
default value immediately; a decision of 1 enters phase 3, where nodes with
success indicator 0 recover the winning value by majority symbol calibration
plus error-corrected decode.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

from . import messages as M
from .binary_ba import BbaNode
from .bua import BuaNode
from .coding import CodingError, CodeParams, CodedSymbol, rs_decode, unpack_message
from .messages import Envelope


class InvariantViolation(Exception):
    """A protocol-impossible situation was reached; surfaced, never masked."""


def majority_symbol(column: dict[int, CodedSymbol], s1: set[int]) -> CodedSymbol:
    """Strict plurality over the column symbols received from S1 senders.

    Ties are protocol-impossible under n >= 3t+1 and raise InvariantViolation
    rather than being broken arbitrarily.
    """
    tally = Counter(column[j].lanes for j in s1 if j in column)
    if not tally:
        raise InvariantViolation("no column symbols available for calibration")
    ranked = tally.most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        raise InvariantViolation("no strict plurality among calibration symbols")
    lanes = ranked[0][0]
    for j in s1:
        if j in column and column[j].lanes == lanes:
            return column[j]
    raise InvariantViolation("winner symbol vanished")  # unreachable


@dataclass
class CoolNode:
    node_id: int
    params: CodeParams
    value: bytes
    proto: str = "cool:0"

    def __post_init__(self) -> None:
        self.n, self.t = self.params.n, self.params.t
        self.bua = BuaNode(self.node_id, self.params, self.value, proto=self.proto)
        self.bba: Optional[BbaNode] = None
        self.phase3_store: dict[int, CodedSymbol] = {}
        self.output: Optional[bytes] = None
        self.done = False
        self.violation: Optional[str] = None

    @property
    def bba_rounds(self) -> int:
        return 3 * (self.t + 1)

    @property
    def last_round(self) -> int:
        return 3 + self.bba_rounds + 1

    def start(self) -> list[Envelope]:
        return self.bua.start()

    def end_round(self, rnd: int, inbox: list[Envelope]) -> list[Envelope]:
        if self.done:
            return []
        if rnd <= 3:
            out = self.bua.end_round(rnd, inbox)
            if rnd == 3:
                self.bba = BbaNode(self.node_id, self.n, self.t,
                                   self.bua.result.vote, proto=self.proto)
                out = out + self.bba.start()
            return out
        if rnd <= 3 + self.bba_rounds:
            out = self.bba.end_round(rnd - 3, inbox)
            if self.bba.done:
                return self._after_decision()
            return out
        return self._finish_phase3(inbox)

    def _after_decision(self) -> list[Envelope]:
        if self.bba.decision == 0:
            self.output = None
            self.done = True
            return []
        res = self.bua.result
        if res.success == 1:
            return []  # output next round; nothing to send
        try:
            winner = majority_symbol(res.column, set(res.s1))
        except InvariantViolation as exc:
            self.violation = str(exc)
            self.done = True
            return []
        self.calibrated = CodedSymbol(self.node_id, winner.lanes)
        return [Envelope(self.proto, M.CORRECT_SYMBOL, self.node_id, j, self.calibrated)
                for j in sorted(res.s0)]

    def _finish_phase3(self, inbox: list[Envelope]) -> list[Envelope]:
        res = self.bua.result
        if res.success == 1:
            self.output = res.value
            self.done = True
            return []
        store = dict(res.diag)
        store[self.node_id] = self.calibrated
        seen: set[int] = set()
        for env in inbox:
            if env.tag != M.CORRECT_SYMBOL or env.sender in seen:
                continue
            seen.add(env.sender)
            if env.sender not in res.s0:
                continue  # accept calibration only from own view of S0
            sym = M.parse_symbol(env.payload)
            if sym is not None and sym.valid_for(self.params, env.sender):
                store[env.sender] = sym
        try:
            data = rs_decode(self.params, store, max_errors=self.t)
            if data is None:
                raise InvariantViolation("phase-3 decode failed")
            self.output = unpack_message(self.params, data)
        except (InvariantViolation, CodingError) as exc:
            self.violation = f"phase-3 decode: {exc}"
        self.done = True
        return []

    def snapshot(self) -> dict:
        snap = {"done": self.done,
                "out": None if self.output is None else self.output.hex(),
                "violation": self.violation}
        snap["bua"] = self.bua.snapshot()
        if self.bba is not None:
            snap["bba"] = self.bba.snapshot()
        return snap
