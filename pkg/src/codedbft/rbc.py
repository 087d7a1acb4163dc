"""Asynchronous reliable broadcast node, balanced and unbalanced variants.

Balanced: the leader disperses coded symbols (LEADER), nodes echo (INITIAL)
and recover the message by online error correction; unbalanced: the leader
broadcasts the whole message (LEADER-FULL) and the dispersal machinery is
bypassed.  Both then run one coded SYMBOL exchange, two indicator rounds
(SI1/SI2), READY amplification, and a calibration phase (CORRECTSYMBOL) for
nodes whose indicators failed.

Every blocking wait of the protocol becomes a guard re-evaluated after each
state change; a guard fires at most once.  SI bits equal to 1 from senders
whose SYMBOL has not arrived stay pending and are classified when it does.
Symbol payloads are stored on receipt; only the link-match classification
waits for the local encoding to exist.  The phase-3 calibration waits for
t+1 equal own-column symbols among senders that sent SI2 with bit 1: at most
t of those senders are faulty, so only the surviving group's symbol can reach
the threshold.  Terminated nodes keep queued sends deliverable but consume
nothing new.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

from . import messages as M
from .coding import CodeParams, CodedSymbol, NOT_YET, encode_message, oec_try_decode
from .messages import Envelope

BALANCED = "balanced"
UNBALANCED = "unbalanced"

_UNSET = object()


@dataclass
class RbcNode:
    node_id: int
    params: CodeParams
    leader_id: int
    variant: str = BALANCED
    instance: str = "0"

    def __post_init__(self) -> None:
        if self.variant not in (BALANCED, UNBALANCED):
            raise ValueError(f"unknown variant {self.variant}")
        self.proto = f"rbc:{self.instance}:{self.leader_id}"
        self.n, self.t, self.k = self.params.n, self.params.t, self.params.k
        self.initial_store: dict[int, CodedSymbol] = {}   # OEC over INITIAL echoes
        self.final_store: dict[int, CodedSymbol] = {}     # OEC over calibrated symbols
        self.l1: set[int] = set()
        self.l0: set[int] = set()
        self.s1 = {1: set(), 2: set()}
        self.s0 = {1: set(), 2: set()}
        self.pending_si = {1: set(), 2: set()}            # SI bit 1, sender unclassified
        self.column: dict[int, CodedSymbol] = {}          # j -> y_i^(j)
        self.diag: dict[int, CodedSymbol] = {}            # j -> y_j^(j)
        self.raw_pairs: dict[int, object] = {}            # awaiting link classification
        self.value: Optional[bytes] = None                # w_i
        self.working: Optional[bytes] = None              # w^(i)
        self.codeword: Optional[list[CodedSymbol]] = None
        self.oec_done = False
        self.oec_final = False
        self.ecc_enc_done = False
        self.si_ph2 = False
        self.phase1 = False
        self.phase3 = False
        self.s_bit = {1: None, 2: None}
        self.si_sent = {1: False, 2: False}
        self.ready_sent: Optional[int] = None
        self.ready_bits: dict[int, int] = {}              # sender -> first READY bit
        self.si2_ones: set[int] = set()                   # per-bit SI2 tallies: the
        self.si2_zeros: set[int] = set()                  # READY triggers count these
        self.v_out: Optional[int] = None
        self.leader_seen = False
        self.symbol_seen: set[int] = set()
        self.calibrated: Optional[CodedSymbol] = None
        self.equivocators: set[int] = set()
        self.output: Optional[bytes] = _UNSET
        self.done = False
        self.outbox: list[Envelope] = []

    # -- helpers ------------------------------------------------------------

    def _send_all(self, tag: str, payload) -> None:
        for j in range(1, self.n + 1):
            self.outbox.append(Envelope(self.proto, tag, self.node_id, j, payload))

    def _take_outbox(self) -> list[Envelope]:
        out, self.outbox = self.outbox, []
        return out

    @property
    def decided(self) -> bool:
        return self.output is not _UNSET

    # -- entry points -------------------------------------------------------

    def start(self, value: Optional[bytes] = None) -> list[Envelope]:
        """Leader input; non-leaders call with None and just listen."""
        if self.node_id == self.leader_id:
            if not value:
                raise ValueError("leader input must be non-empty")
            if self.variant == BALANCED:
                shares = encode_message(self.params, value)
                for j in range(1, self.n + 1):
                    self.outbox.append(Envelope(self.proto, M.LEADER,
                                                self.node_id, j, shares[j - 1]))
            else:
                self._send_all(M.LEADER_FULL, value)
        self._drain()
        return self._take_outbox()

    def handle(self, env: Envelope) -> list[Envelope]:
        if self.done:
            return []
        handler = {
            M.LEADER: self._on_leader,
            M.LEADER_FULL: self._on_leader_full,
            M.INITIAL: self._on_initial,
            M.SYMBOL: self._on_symbol,
            M.SI1: lambda e: self._on_si(1, e),
            M.SI2: lambda e: self._on_si(2, e),
            M.READY: self._on_ready,
            M.CORRECTSYMBOL: self._on_correctsymbol,
        }.get(env.tag)
        if handler is not None:
            handler(env)
            self._drain()
        return self._take_outbox()

    # -- message handlers ---------------------------------------------------

    def _on_leader(self, env: Envelope) -> None:
        if self.variant != BALANCED or env.sender != self.leader_id or self.leader_seen:
            return
        self.leader_seen = True
        sym = M.parse_symbol(env.payload)
        if sym is None or not sym.valid_for(self.params, self.node_id):
            return
        self._send_all(M.INITIAL, sym)

    def _on_leader_full(self, env: Envelope) -> None:
        if self.variant != UNBALANCED or env.sender != self.leader_id or self.leader_seen:
            return
        self.leader_seen = True
        if not isinstance(env.payload, bytes) or not env.payload:
            return
        if len(env.payload) > self.params.max_payload_bytes:
            return
        self.value = self.working = env.payload
        self.oec_done = True
        self.phase1 = True

    def _on_initial(self, env: Envelope) -> None:
        if self.variant != BALANCED or self.oec_done or env.sender in self.initial_store:
            return
        sym = M.parse_symbol(env.payload)
        if sym is None or not sym.valid_for(self.params, env.sender):
            return
        self.initial_store[env.sender] = sym
        got = oec_try_decode(self.params, self.initial_store, require_nonempty=True)
        if got is not NOT_YET:
            self.value = self.working = got
            self.oec_done = True
            self.phase1 = True

    def _on_symbol(self, env: Envelope) -> None:
        j = env.sender
        if j in self.symbol_seen:
            return
        self.symbol_seen.add(j)
        pair = M.parse_pair(env.payload)
        if pair is not None:
            mine, theirs = pair
            if mine.valid_for(self.params, self.node_id) and theirs.valid_for(self.params, j):
                self.column[j] = mine
                self.diag[j] = theirs
        if self.ecc_enc_done:
            self._classify_link(j)
        else:
            self.raw_pairs[j] = env.payload

    def _classify_link(self, j: int) -> None:
        ok = False
        if j in self.column and j in self.diag:
            local = (self.codeword[self.node_id - 1], self.codeword[j - 1])
            ok = (self.column[j], self.diag[j]) == local
        (self.l1 if ok else self.l0).add(j)

    def _on_si(self, phase: int, env: Envelope) -> None:
        j = env.sender
        if j in self.s1[phase] or j in self.s0[phase] or j in self.pending_si[phase]:
            return
        bit = M.parse_bit(env.payload)
        if bit == 1:
            self.pending_si[phase].add(j)  # classified against L1/L0 by the drain
            if phase == 2:
                self.si2_ones.add(j)
        else:
            self.s0[phase].add(j)
            if phase == 2 and bit == 0:
                self.si2_zeros.add(j)

    def _on_ready(self, env: Envelope) -> None:
        j = env.sender
        bit = M.parse_bit(env.payload)
        if bit is None:
            return
        if j in self.ready_bits:
            if self.ready_bits[j] != bit:
                self.equivocators.add(j)
            return
        self.ready_bits[j] = bit

    def _on_correctsymbol(self, env: Envelope) -> None:
        j = env.sender
        if j in self.final_store or self.oec_final:
            return
        sym = M.parse_symbol(env.payload)
        if sym is None or not sym.valid_for(self.params, j):
            return
        self.final_store[j] = sym
        self._final_oec()

    # -- guard fixpoint -----------------------------------------------------

    def _drain(self) -> None:
        moved = True
        while moved and not self.done:
            moved = False
            moved |= self._g_phase1_send()
            moved |= self._g_classify_pending()
            moved |= self._g_si1()
            moved |= self._g_si2()
            moved |= self._g_ready_thresholds()
            moved |= self._g_vout()
            moved |= self._g_second_oec_source()
            moved |= self._g_phase3()

    def _g_phase1_send(self) -> bool:
        if not self.phase1 or self.ecc_enc_done:
            return False
        self.codeword = encode_message(self.params, self.value)
        me = self.node_id
        for j in range(1, self.n + 1):
            self.outbox.append(Envelope(
                self.proto, M.SYMBOL, me, j,
                (self.codeword[j - 1], self.codeword[me - 1])))
        self.ecc_enc_done = True
        for j in sorted(self.raw_pairs):
            self._classify_link(j)
        self.raw_pairs.clear()
        return True

    def _g_classify_pending(self) -> bool:
        moved = False
        for phase in (1, 2):
            for j in list(self.pending_si[phase]):
                if j in self.l1:
                    self.s1[phase].add(j)
                elif j in self.l0:
                    self.s0[phase].add(j)
                else:
                    continue
                self.pending_si[phase].discard(j)
                moved = True
        return moved

    def _g_si1(self) -> bool:
        if self.si_sent[1]:
            return False
        if len(self.l1) >= self.n - self.t:
            self.s_bit[1] = 1
        elif len(self.l0) >= self.t + 1:
            self.s_bit[1] = 0
        else:
            return False
        self.si_sent[1] = True
        self._send_all(M.SI1, self.s_bit[1])
        return True

    def _g_si2(self) -> bool:
        if self.si_sent[2]:
            return False
        if self.si_sent[1] and self.s_bit[1] == 0:
            self.s_bit[2] = 0
        elif (self.si_sent[1] and self.s_bit[1] == 1
              and len(self.s1[1]) >= self.n - self.t):
            self.s_bit[2] = 1
            self.si_ph2 = True
        elif len(self.s0[1]) >= self.t + 1:
            self.s_bit[2] = 0
        else:
            return False
        self.si_sent[2] = True
        self._send_all(M.SI2, self.s_bit[2])
        return True

    def _g_ready_thresholds(self) -> bool:
        # n-t same-bit SI2 senders back a READY; the link-classified sets are
        # not used here: a mismatched-link SI2(1) sender must not count toward
        # the 0 side, or two honest groups could READY different bits
        moved = False
        if self.ready_sent is None:
            for v in (1, 0):
                if len(self.si2_ones if v == 1 else self.si2_zeros) >= self.n - self.t:
                    self._emit_ready(v)
                    moved = True
                    break
        if self.ready_sent is None:
            tally = Counter(self.ready_bits.values())
            for v in (1, 0):
                if tally[v] >= self.t + 1:
                    self._emit_ready(v)
                    moved = True
                    break
        return moved

    def _emit_ready(self, v: int) -> None:
        self.ready_sent = v
        self._send_all(M.READY, v)

    def _g_vout(self) -> bool:
        if self.v_out is not None:
            return False
        tally = Counter(self.ready_bits.values())
        for v in (1, 0):
            if tally[v] >= 2 * self.t + 1:
                if self.ready_sent is None:
                    self._emit_ready(v)
                self.v_out = v
                if v == 0:
                    self.working = None
                    self._finish()
                else:
                    self.phase3 = True
                return True
        return False

    def _g_second_oec_source(self) -> bool:
        """Symbols from SI2(1) senders feed the final OEC store as well."""
        if self.oec_final:
            return False
        moved = False
        for j in self.si2_ones:
            if j in self.final_store or j not in self.diag:
                continue
            self.final_store[j] = self.diag[j]
            moved = True
        if moved:
            self._final_oec()
        return moved

    def _final_oec(self) -> None:
        if self.oec_final:
            return
        got = oec_try_decode(self.params, self.final_store)
        if got is not NOT_YET:
            self.working = got
            self.oec_final = True

    def _g_phase3(self) -> bool:
        if not self.phase3 or self.done:
            return False
        if self.si_ph2:
            self._finish()
            return True
        if self.calibrated is None:
            counts: Counter = Counter()
            for j in self.si2_ones:
                if j in self.column:
                    counts[self.column[j].lanes] += 1
            best = counts.most_common(1)
            if best and best[0][1] >= self.t + 1:
                self.calibrated = CodedSymbol(self.node_id, best[0][0])
                self._send_all(M.CORRECTSYMBOL, self.calibrated)
                return True
        if self.calibrated is not None and self.oec_final:
            self._finish()
            return True
        return False

    def _finish(self) -> None:
        self.output = self.working
        self.done = True

    def clone(self) -> "RbcNode":
        """Fast structural copy; immutable members (params, symbols) are shared."""
        other = RbcNode.__new__(RbcNode)
        other.node_id, other.params, other.leader_id = self.node_id, self.params, self.leader_id
        other.variant, other.instance, other.proto = self.variant, self.instance, self.proto
        other.n, other.t, other.k = self.n, self.t, self.k
        other.initial_store = dict(self.initial_store)
        other.final_store = dict(self.final_store)
        other.l1, other.l0 = set(self.l1), set(self.l0)
        other.s1 = {1: set(self.s1[1]), 2: set(self.s1[2])}
        other.s0 = {1: set(self.s0[1]), 2: set(self.s0[2])}
        other.pending_si = {1: set(self.pending_si[1]), 2: set(self.pending_si[2])}
        other.column, other.diag = dict(self.column), dict(self.diag)
        other.raw_pairs = dict(self.raw_pairs)
        other.value, other.working = self.value, self.working
        other.codeword = None if self.codeword is None else list(self.codeword)
        other.oec_done, other.oec_final = self.oec_done, self.oec_final
        other.ecc_enc_done, other.si_ph2 = self.ecc_enc_done, self.si_ph2
        other.phase1, other.phase3 = self.phase1, self.phase3
        other.s_bit, other.si_sent = dict(self.s_bit), dict(self.si_sent)
        other.ready_sent = self.ready_sent
        other.ready_bits = dict(self.ready_bits)
        other.si2_ones = set(self.si2_ones)
        other.si2_zeros = set(self.si2_zeros)
        other.v_out, other.leader_seen = self.v_out, self.leader_seen
        other.symbol_seen = set(self.symbol_seen)
        other.calibrated = self.calibrated
        other.equivocators = set(self.equivocators)
        other.output, other.done = self.output, self.done
        other.outbox = list(self.outbox)
        other._digest = getattr(self, "_digest", None)
        return other

    def state_key(self) -> tuple:
        """Canonical hashable encoding of the full node state (for exploration).

        Coded symbols are flattened to (index, lanes) so the key reprs fast.
        """
        def sym(s):
            return None if s is None else (s.index, s.lanes)

        def d(m):
            return tuple(sorted(
                (k, sym(v) if isinstance(v, CodedSymbol) else v)
                for k, v in m.items()))
        return (
            self.node_id, d(self.initial_store), d(self.final_store),
            tuple(sorted(self.l1)), tuple(sorted(self.l0)),
            tuple(sorted(self.s1[1])), tuple(sorted(self.s1[2])),
            tuple(sorted(self.s0[1])), tuple(sorted(self.s0[2])),
            tuple(sorted(self.pending_si[1])), tuple(sorted(self.pending_si[2])),
            d(self.column), d(self.diag),
            tuple(sorted((j, str(p)) for j, p in self.raw_pairs.items())),
            self.value, self.working,
            None if self.codeword is None else tuple(sym(s) for s in self.codeword),
            self.oec_done, self.oec_final, self.ecc_enc_done, self.si_ph2,
            self.phase1, self.phase3, d(self.s_bit), d(self.si_sent),
            self.ready_sent, d(self.ready_bits), tuple(sorted(self.si2_ones)),
            tuple(sorted(self.si2_zeros)),
            self.v_out, self.leader_seen, tuple(sorted(self.symbol_seen)),
            sym(self.calibrated), tuple(sorted(self.equivocators)),
            ("unset" if self.output is _UNSET else self.output), self.done,
        )

    def snapshot(self) -> dict:
        return {
            "done": self.done,
            "out": (None if self.output in (_UNSET, None) else self.output.hex()),
            "decided": self.output is not _UNSET,
            "w_initial": None if self.value is None else self.value.hex(),
            "s1_bit": self.s_bit[1], "s2_bit": self.s_bit[2],
            "si_ph2": self.si_ph2,
            "ready_sent": self.ready_sent,
            "v_out": self.v_out,
            "l1": sorted(self.l1), "l0": sorted(self.l0),
            "equivocators": sorted(self.equivocators),
        }
