"""Byzantine unique agreement: two synchronous phases of coded-symbol
exchange, link/success indicators, and error masking.

Round mapping: round 1 exchanges SYMBOL pairs, round 2 exchanges SI-PH1
indicators, round 3 carries SI-PH2 demotions.  Messages missing, duplicated,
or malformed at a boundary count as indicator 0.  The output carries the
working value, success indicator, vote, the S0/S1 index sets, and the
diagonal / own-column symbol stores needed by the phase-3 multicast.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import messages as M
from .coding import CodeParams, CodedSymbol, encode_message
from .messages import Envelope


@dataclass
class BuaOutput:
    value: Optional[bytes]
    success: int
    vote: int
    s0: frozenset[int]
    s1: frozenset[int]
    diag: dict[int, CodedSymbol]      # j -> y_j^(j), as known
    column: dict[int, CodedSymbol]    # j -> y_i^(j), as known


@dataclass
class BuaNode:
    node_id: int
    params: CodeParams
    value: bytes
    proto: str = "bua:0"

    def __post_init__(self) -> None:
        if not self.value:
            raise ValueError("input value must be non-empty")
        n = self.params.n
        self.n, self.t = n, self.params.t
        self.working: Optional[bytes] = self.value
        self.codeword = encode_message(self.params, self.value)
        self.u = {j: 0 for j in range(1, n + 1)}
        self.u_phase1: dict[int, int] = {}
        self.success = 0
        self.vote = 0
        self.si_bits: dict[int, int] = {}
        self.s1: set[int] = set()
        self.s0: set[int] = set()
        self.diag: dict[int, CodedSymbol] = {}
        self.column: dict[int, CodedSymbol] = {}
        self.result: Optional[BuaOutput] = None
        self.done = False

    def _broadcast(self, tag: str, payload_fn) -> list[Envelope]:
        return [Envelope(self.proto, tag, self.node_id, j, payload_fn(j))
                for j in range(1, self.n + 1)]

    def start(self) -> list[Envelope]:
        y = self.codeword
        me = self.node_id
        return self._broadcast(M.SYMBOL, lambda j: (y[j - 1], y[me - 1]))

    def end_round(self, rnd: int, inbox: list[Envelope]) -> list[Envelope]:
        if rnd == 1:
            return self._close_phase1(inbox)
        if rnd == 2:
            return self._open_phase2(inbox)
        if rnd == 3:
            self._close_phase2(inbox)
            return []
        return []

    def _close_phase1(self, inbox: list[Envelope]) -> list[Envelope]:
        seen: set[int] = set()
        for env in inbox:
            if env.tag != M.SYMBOL or env.sender in seen:
                continue
            seen.add(env.sender)
            self._handle_symbol(env.sender, env.payload)
        if sum(self.u.values()) >= self.n - self.t:
            self.success = 1
        else:
            self.success = 0
            self.working = None
        self.u_phase1 = dict(self.u)
        return self._broadcast(M.SI_PH1, lambda j: self.success)

    def _handle_symbol(self, j: int, payload) -> None:
        pair = M.parse_pair(payload)
        if pair is None:
            self.u[j] = 0
            return
        mine, theirs = pair
        me = self.node_id
        local = (self.codeword[me - 1], self.codeword[j - 1])
        ok = (mine.valid_for(self.params, me) and theirs.valid_for(self.params, j))
        self.u[j] = 1 if ok and (mine, theirs) == local else 0
        if ok:
            self.column[j] = mine
            self.diag[j] = theirs

    def _open_phase2(self, inbox: list[Envelope]) -> list[Envelope]:
        for env in inbox:
            if env.tag != M.SI_PH1 or env.sender in self.si_bits:
                continue
            bit = M.parse_bit(env.payload)
            self.si_bits[env.sender] = bit if bit is not None else 0
        for j in range(1, self.n + 1):
            (self.s1 if self.si_bits.get(j, 0) == 1 else self.s0).add(j)
        if self.success != 1:
            return []
        for j in self.s0:
            self.u[j] = 0
        if sum(self.u.values()) < self.n - self.t:
            self.success = 0
            self.working = None
            return self._broadcast(M.SI_PH2, lambda j: 0)
        return []

    def _close_phase2(self, inbox: list[Envelope]) -> None:
        seen: set[int] = set()
        for env in inbox:
            if env.tag != M.SI_PH2 or env.sender in seen:
                continue
            seen.add(env.sender)
            if env.sender not in self.s1:
                continue  # only demotions from previously-1 senders count
            bit = M.parse_bit(env.payload)
            self.si_bits[env.sender] = bit if bit is not None else 0
        self.s1 = {j for j in range(1, self.n + 1) if self.si_bits.get(j, 0) == 1}
        self.s0 = {j for j in range(1, self.n + 1) if j not in self.s1}
        self.vote = 1 if len(self.s1) >= 2 * self.t + 1 else 0
        self.result = BuaOutput(
            value=self.working, success=self.success, vote=self.vote,
            s0=frozenset(self.s0), s1=frozenset(self.s1),
            diag=dict(self.diag), column=dict(self.column))
        self.done = True

    @property
    def output(self):
        return self.result

    def snapshot(self) -> dict:
        return {
            "s": self.success,
            "v": self.vote,
            "u": "".join(str(self.u[j]) for j in range(1, self.n + 1)),
            "u1": "".join(str(self.u_phase1.get(j, 0)) for j in range(1, self.n + 1)),
            "s1": sorted(self.s1),
            "s0": sorted(self.s0),
            "w": None if self.working is None else self.working.hex(),
        }
