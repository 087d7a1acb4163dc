"""Byzantine adversary strategies.

A strategy owns the corrupt nodes: their protocol machines still run (so the
strategy has an honest baseline to mutate) but every envelope they emit passes
through the strategy, which may drop, rewrite, or replace it, and may inject
extra envelopes.  In the synchronous engine the strategy additionally sees the
honest envelopes of the current round before the corrupt ones are fixed
(full-information rushing).  Strategies never touch honest-sender envelopes.

The mirror trick used by ``two-group-split``: a corrupt node c that received
(y_c^(h), y_h^(h)) from honest h replies with the swapped pair, which matches
h's local view by construction, so every honest node links c as consistent
whatever value h holds.  This is the strongest support an adversary can lend
to two honest groups trying to keep conflicting values alive.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import messages as M
from .coding import CodeParams, CodedSymbol, encode_message
from .messages import Envelope

INDICATOR_TAGS = {M.SI_PH1, M.SI_PH2, M.BBA_V1, M.BBA_KING, M.SI1, M.SI2, M.READY}
SYMBOLIC_TAGS = {M.SYMBOL, M.LEADER, M.INITIAL, M.CORRECT_SYMBOL, M.CORRECTSYMBOL}

STRATEGIES = ["silent", "random-bytes", "equivocate-symbols", "two-group-split",
              "si-flip", "ready-spam", "delay-targets", "scripted",
              "scripted-rushing", "two-face-leader", "silent-after-half", "none"]


@dataclass(frozen=True)
class AdversarySpec:
    corrupt: tuple[int, ...] = ()
    strategy: str = "none"
    params: dict = field(default_factory=dict)

    def validate(self, n: int, t: int) -> None:
        if len(self.corrupt) > t:
            raise ValueError(f"|F|={len(self.corrupt)} exceeds fault bound t={t}")
        if any(not 1 <= j <= n for j in self.corrupt):
            raise ValueError("corrupt node index out of range")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")


class Strategy:
    """Pass-through baseline; subclasses override the transform hooks."""

    def __init__(self, spec: AdversarySpec, params: CodeParams, seed: int,
                 leader_id: Optional[int] = None, variant: Optional[str] = None):
        self.spec = spec
        self.corrupt = set(spec.corrupt)
        self.params = params
        self.n, self.t = params.n, params.t
        self.rng = random.Random((seed, "adversary", spec.strategy).__str__())
        self.leader_id = leader_id
        self.variant = variant
        self.leader_value: Optional[bytes] = None  # set by the engine when the leader is corrupt
        self.seen: list[Envelope] = []  # envelopes addressed to corrupt nodes

    def observe(self, env: Envelope) -> None:
        if env.receiver in self.corrupt:
            self.seen.append(env)

    def transform_round(self, rnd: int, honest: list[Envelope],
                        corrupt: list[Envelope]) -> list[Envelope]:
        """Sync hook: honest round envelopes are visible (rushing)."""
        for env in honest:
            self.observe(env)
        return [e2 for e in corrupt for e2 in self.rewrite(e)]

    def transform_send(self, envs: list[Envelope]) -> list[Envelope]:
        """Async hook applied to each corrupt outbox."""
        return [e2 for e in envs for e2 in self.rewrite(e)]

    def on_deliver(self, env: Envelope) -> list[Envelope]:
        """Async hook after a delivery to a corrupt node; may inject."""
        self.observe(env)
        return []

    def rewrite(self, env: Envelope) -> list[Envelope]:
        return [env]

    # helpers

    def _clone(self, env: Envelope, payload, receiver=None) -> Envelope:
        return Envelope(env.proto, env.tag, env.sender,
                        receiver if receiver is not None else env.receiver,
                        payload, meta=env.meta)

    def _garbage_symbol(self, index: int) -> CodedSymbol:
        nbytes = self.params.lane_bytes * self.params.lane_count
        return CodedSymbol(index, self.rng.randbytes(nbytes))


class Silent(Strategy):
    def rewrite(self, env: Envelope) -> list[Envelope]:
        return []


class RandomBytes(Strategy):
    def rewrite(self, env: Envelope) -> list[Envelope]:
        size = max(1, (env.bits + 7) // 8)
        return [self._clone(env, self.rng.randbytes(size))]


class EquivocateSymbols(Strategy):
    """Symbol payloads are re-randomized per receiver; bits stay honest."""

    def rewrite(self, env: Envelope) -> list[Envelope]:
        if env.tag not in SYMBOLIC_TAGS:
            return [env]
        if env.tag == M.SYMBOL and isinstance(env.payload, tuple):
            a, b = env.payload
            return [self._clone(env, (self._garbage_symbol(a.index),
                                      self._garbage_symbol(b.index)))]
        if isinstance(env.payload, CodedSymbol):
            return [self._clone(env, self._garbage_symbol(env.payload.index))]
        return [env]


class SiFlip(Strategy):
    """Indicator and vote bits are flipped toward half the receivers."""

    def rewrite(self, env: Envelope) -> list[Envelope]:
        if env.tag in INDICATOR_TAGS and env.payload in (0, 1):
            if env.receiver % 2 == 1:
                return [self._clone(env, 1 - env.payload)]
        if env.tag == M.BBA_V2 and env.payload in (0, 1, 2):
            if env.receiver % 2 == 1:
                return [self._clone(env, {0: 1, 1: 0, 2: 0}[env.payload])]
        return [env]


class TwoGroupSplit(Strategy):
    """Mirror received pairs so every honest node links the corrupt senders,
    claim success everywhere, and push the binary vote toward 1."""

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.mirror: dict[tuple[int, int], tuple] = {}

    def observe(self, env: Envelope) -> None:
        super().observe(env)
        if (env.tag == M.SYMBOL and env.receiver in self.corrupt
                and isinstance(env.payload, tuple)):
            a, b = env.payload
            if isinstance(a, CodedSymbol) and isinstance(b, CodedSymbol):
                self.mirror[(env.receiver, env.sender)] = (b, a)

    def on_deliver(self, env: Envelope) -> list[Envelope]:
        self.observe(env)
        return []

    def rewrite(self, env: Envelope) -> list[Envelope]:
        if env.tag == M.SYMBOL:
            swapped = self.mirror.get((env.sender, env.receiver))
            if swapped is not None:
                return [self._clone(env, swapped)]
            return [env]
        if env.tag in (M.SI_PH1, M.SI1, M.SI2):
            return [self._clone(env, 1)]
        if env.tag == M.SI_PH2:
            return []  # never demote
        if env.tag in (M.BBA_V1, M.BBA_KING, M.READY):
            return [self._clone(env, 1)]
        if env.tag == M.BBA_V2:
            return [self._clone(env, 1)]
        if env.tag in (M.CORRECT_SYMBOL, M.CORRECTSYMBOL):
            return [self._clone(env, self._garbage_symbol(env.payload.index))]
        return [env]


class ReadySpam(Strategy):
    """Emit conflicting READY bits to everyone at the first opportunity."""

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.spammed: set[int] = set()

    def on_deliver(self, env: Envelope) -> list[Envelope]:
        self.observe(env)
        node = env.receiver
        if node in self.spammed:
            return []
        self.spammed.add(node)
        out = []
        for bit in (0, 1):
            for j in range(1, self.n + 1):
                out.append(Envelope(env.proto, M.READY, node, j, bit))
        return out


class ScriptedRushing(Strategy):
    """Mimic the lowest-indexed honest sender toward each receiver, with
    indicator bits inverted; exercises the full-information rushing path."""

    def transform_round(self, rnd: int, honest: list[Envelope],
                        corrupt: list[Envelope]) -> list[Envelope]:
        for env in honest:
            self.observe(env)
        model: dict[tuple[str, int, Optional[int]], Envelope] = {}
        for env in honest:
            key = (env.tag, env.receiver, env.meta)
            if key not in model or env.sender < model[key].sender:
                model[key] = env
        out = []
        for env in corrupt:
            src = model.get((env.tag, env.receiver, env.meta))
            payload = env.payload if src is None else src.payload
            if env.tag in INDICATOR_TAGS and payload in (0, 1):
                payload = 1 - payload
            out.append(self._clone(env, payload))
        return out

    def rewrite(self, env: Envelope) -> list[Envelope]:
        if env.tag in INDICATOR_TAGS and env.payload in (0, 1):
            return [self._clone(env, 1 - env.payload)]
        return [env]


class TwoFaceLeader(Strategy):
    """Corrupt leader disperses one value to low indices, another to the rest;
    behaves honestly afterwards."""

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self._alt_shares: Optional[list[CodedSymbol]] = None
        self._alt_value: Optional[bytes] = None

    def _alt_for(self, value: bytes):
        if self._alt_value is None:
            self._alt_value = bytes(b ^ 0xFF for b in value)
            if self.variant != "unbalanced":
                self._alt_shares = encode_message(self.params, self._alt_value)

    def rewrite(self, env: Envelope) -> list[Envelope]:
        half = self.n // 2
        if env.tag == M.LEADER and isinstance(env.payload, CodedSymbol):
            if env.receiver <= half:
                return [env]
            if self._alt_shares is None and self.leader_value is not None:
                self._alt_for(self.leader_value)
            if self._alt_shares is not None:
                return [self._clone(env, self._alt_shares[env.receiver - 1])]
            return [self._clone(env, self._garbage_symbol(env.payload.index))]
        if env.tag == M.LEADER_FULL and isinstance(env.payload, bytes):
            if env.receiver <= half:
                return [env]
            self._alt_for(env.payload)
            return [self._clone(env, self._alt_value)]
        return [env]


class SilentAfterHalf(Strategy):
    """Leader serves only the low half of the ring, then goes quiet."""

    def rewrite(self, env: Envelope) -> list[Envelope]:
        if env.tag in (M.LEADER, M.LEADER_FULL):
            return [env] if env.receiver <= (self.n + 1) // 2 else []
        return []


class Scripted(Strategy):
    """Programmable: params['rewrite'] is a callable env -> list[Envelope],
    or params['table'] maps (round, receiver) to a replacement bit payload
    (missing entries withhold the message).  With neither, falls back to the
    rushing mimic, which is what config files get.
    """

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        fn = self.spec.params.get("rewrite")
        self._fn: Optional[Callable] = fn if callable(fn) else None
        self._table: Optional[dict] = self.spec.params.get("table")
        self._fallback = ScriptedRushing(self.spec, self.params,
                                         0, self.leader_id, self.variant)

    def transform_round(self, rnd, honest, corrupt):
        for env in honest:
            self.observe(env)
        if self._table is not None:
            out = []
            for env in corrupt:
                bit = self._table.get((rnd, env.receiver))
                if bit is not None:
                    out.append(self._clone(env, bit))
            return out
        if self._fn is not None:
            return [e2 for e in corrupt for e2 in self._fn(e)]
        return self._fallback.transform_round(rnd, honest, corrupt)

    def rewrite(self, env: Envelope) -> list[Envelope]:
        if self._fn is not None:
            return self._fn(env)
        return self._fallback.rewrite(env)


_REGISTRY = {
    "none": Strategy,
    "silent": Silent,
    "random-bytes": RandomBytes,
    "equivocate-symbols": EquivocateSymbols,
    "si-flip": SiFlip,
    "two-group-split": TwoGroupSplit,
    "ready-spam": ReadySpam,
    "scripted": Scripted,
    "scripted-rushing": ScriptedRushing,
    "two-face-leader": TwoFaceLeader,
    "silent-after-half": SilentAfterHalf,
    "delay-targets": Strategy,  # node-level honest; effect lives in the scheduler
}


def make_strategy(spec: Optional[AdversarySpec], params: CodeParams, seed: int,
                  leader_id: Optional[int] = None,
                  variant: Optional[str] = None) -> Strategy:
    spec = spec or AdversarySpec()
    cls = _REGISTRY[spec.strategy]
    return cls(spec, params, seed, leader_id, variant)
