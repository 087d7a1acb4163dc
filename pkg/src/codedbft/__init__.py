"""Coded Byzantine agreement and reliable broadcast, with a deterministic
adversarial network simulator and a trace invariant checker."""

from .adversary import AdversarySpec
from .coding import (CodeParams, CodedSymbol, GF, NOT_YET, encode_message,
                     oec_try_decode, pack_message, rs_decode, rs_encode,
                     unpack_message)
from .engine import SchedulerPolicy, explore_async, run_async, run_sync
from .invariants import Violation, check_invariants
from .metrics import collect_metrics
from .trace import ExecutionTrace

__all__ = [
    "AdversarySpec", "CodeParams", "CodedSymbol", "GF", "NOT_YET",
    "ExecutionTrace", "SchedulerPolicy", "Violation", "check_invariants",
    "collect_metrics", "encode_message", "explore_async", "oec_try_decode",
    "pack_message", "rs_decode", "rs_encode", "run_async", "run_sync",
    "unpack_message",
]
