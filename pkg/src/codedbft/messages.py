"""Wire envelopes, tag schemas, bit accounting, and trace serialization.

Payload schema by tag:

==============  =======================================  ==========
tag             payload                                  bits
==============  =======================================  ==========
SYMBOL          (CodedSymbol, CodedSymbol) pair          2 * lanes * c
SI-PH1/SI-PH2   indicator bit                            1
BBA-V1          estimate bit                             1
BBA-V2          graded value 0 / 1 / 2 (2 = undecided)   2
BBA-KING        king's value bit                         1
CORRECT-SYMBOL  CodedSymbol                              lanes * c
LEADER/INITIAL  CodedSymbol                              lanes * c
CORRECTSYMBOL   CodedSymbol                              lanes * c
LEADER-FULL     message bytes                            16 + 8*len
SI1/SI2/READY   indicator bit                            1
==============  =======================================  ==========

Adversarial payloads may be raw bytes under any tag; handlers treat anything
that fails schema validation as malformed.  Bit counters charge the payload's
information content (raw bytes at 8 bits each); envelope framing is not
counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from .coding import CodedSymbol

SYMBOL = "SYMBOL"
SI_PH1 = "SI-PH1"
SI_PH2 = "SI-PH2"
BBA_V1 = "BBA-V1"
BBA_V2 = "BBA-V2"
BBA_KING = "BBA-KING"
CORRECT_SYMBOL = "CORRECT-SYMBOL"
LEADER = "LEADER"
LEADER_FULL = "LEADER-FULL"
INITIAL = "INITIAL"
SI1 = "SI1"
SI2 = "SI2"
READY = "READY"
CORRECTSYMBOL = "CORRECTSYMBOL"

BIT_TAGS = {SI_PH1, SI_PH2, BBA_V1, BBA_KING, SI1, SI2, READY}
SYM_TAGS = {CORRECT_SYMBOL, LEADER, INITIAL, CORRECTSYMBOL}
PAIR_TAGS = {SYMBOL}


@dataclass
class Envelope:
    """One point-to-point message scheduled by an engine."""

    proto: str
    tag: str
    sender: int
    receiver: int
    payload: Any
    meta: Optional[int] = None      # phase number for BBA tags
    send_mark: int = 0              # round (sync) or step sequence (async)
    deliver_mark: int = -1
    depth: int = 0                  # causal depth stamp (async honest chains)
    bits: int = field(default=0)

    def __post_init__(self) -> None:
        if not self.bits:
            self.bits = payload_bits(self.tag, self.payload)


def payload_bits(tag: str, payload: Any) -> int:
    if tag == LEADER_FULL and isinstance(payload, bytes):
        return 16 + 8 * len(payload)
    if isinstance(payload, bytes):
        return 8 * len(payload)
    if payload is None:
        return 16 if tag == LEADER_FULL else 1
    if tag in BIT_TAGS:
        return 1
    if tag == BBA_V2:
        return 2
    if tag in SYM_TAGS and isinstance(payload, CodedSymbol):
        return 8 * len(payload.lanes)
    if tag in PAIR_TAGS and isinstance(payload, tuple):
        return sum(8 * len(s.lanes) for s in payload if isinstance(s, CodedSymbol))
    if isinstance(payload, int):
        return max(1, payload.bit_length())
    raise TypeError(f"cannot size payload {payload!r} under tag {tag}")


def payload_to_json(payload: Any) -> dict:
    if payload is None:
        return {"k": "none"}
    if isinstance(payload, int):
        return {"k": "int", "v": payload}
    if isinstance(payload, bytes):
        return {"k": "bytes", "v": payload.hex()}
    if isinstance(payload, CodedSymbol):
        return {"k": "sym", "v": payload.to_bytes().hex()}
    if isinstance(payload, tuple) and all(isinstance(s, CodedSymbol) for s in payload):
        return {"k": "pair", "v": [s.to_bytes().hex() for s in payload]}
    raise TypeError(f"unserializable payload {payload!r}")


def payload_from_json(obj: dict) -> Any:
    kind = obj["k"]
    if kind == "none":
        return None
    if kind == "int":
        return obj["v"]
    if kind == "bytes":
        return bytes.fromhex(obj["v"])
    if kind == "sym":
        return CodedSymbol.from_bytes(bytes.fromhex(obj["v"]))
    if kind == "pair":
        return tuple(CodedSymbol.from_bytes(bytes.fromhex(h)) for h in obj["v"])
    raise ValueError(f"unknown payload kind {kind}")


def envelope_to_json(env: Envelope) -> dict:
    return {
        "type": "env",
        "proto": env.proto,
        "tag": env.tag,
        "from": env.sender,
        "to": env.receiver,
        "meta": env.meta,
        "sm": env.send_mark,
        "dm": env.deliver_mark,
        "depth": env.depth,
        "bits": env.bits,
        "payload": payload_to_json(env.payload),
    }


def envelope_from_json(obj: dict) -> Envelope:
    return Envelope(
        proto=obj["proto"], tag=obj["tag"], sender=obj["from"], receiver=obj["to"],
        payload=payload_from_json(obj["payload"]), meta=obj.get("meta"),
        send_mark=obj["sm"], deliver_mark=obj["dm"], depth=obj.get("depth", 0),
        bits=obj["bits"],
    )


def parse_bit(payload: Any) -> Optional[int]:
    """Indicator-bit payloads; anything but a clean 0/1 is malformed."""
    if payload in (0, 1):
        return payload
    return None


def parse_symbol(payload: Any) -> Optional[CodedSymbol]:
    return payload if isinstance(payload, CodedSymbol) else None


def parse_pair(payload: Any) -> Optional[tuple[CodedSymbol, CodedSymbol]]:
    if (isinstance(payload, tuple) and len(payload) == 2
            and all(isinstance(s, CodedSymbol) for s in payload)):
        return payload
    return None
