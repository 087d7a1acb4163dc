#!/usr/bin/env python3
"""Regenerate the golden artifacts shipped with the repo:

* golden/rs_vectors.json  -- encode/decode pairs in the documented symbol layout
* golden/traces/*.jsonl   -- small deterministic executions used by replay tests

Run from the repo root:  python scripts/make_golden.py
"""

import json
import os
import random
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from codedbft.adversary import AdversarySpec
from codedbft.coding import CodeParams, CodedSymbol, pack_message, rs_encode
from codedbft.engine import SchedulerPolicy, run_async, run_sync

ROOT = os.path.join(os.path.dirname(__file__), "..")
GOLDEN = os.path.join(ROOT, "golden")


def make_vectors() -> None:
    rng = random.Random(20250808)
    vectors = []
    for (n, t, k, c, payload) in [(4, 1, 1, 8, 8), (7, 2, 1, 8, 16),
                                  (10, 3, 1, 8, 32), (16, 5, 2, 8, 64)]:
        p = CodeParams.make(n, t, k=k, c=c, max_payload=payload)
        w = rng.randbytes(payload)
        data = pack_message(p, w)
        cw = rs_encode(p, data)
        corrupt = {}
        e = min(t, (n - k) // 2)
        for idx in rng.sample(range(1, n + 1), e):
            corrupt[str(idx)] = CodedSymbol(
                idx, rng.randbytes(len(cw[0].lanes))).to_bytes().hex()
        vectors.append({
            "n": n, "t": t, "k": k, "c": c, "msg_bits": p.msg_bits,
            "payload": w.hex(),
            "data": data.tolist(),
            "codeword": [s.to_bytes().hex() for s in cw],
            "corrupt": corrupt,
            "max_errors": e,
        })
    with open(os.path.join(GOLDEN, "rs_vectors.json"), "w") as fh:
        json.dump(vectors, fh, indent=1)
    print(f"rs_vectors.json: {len(vectors)} vectors")


def make_traces() -> None:
    outdir = os.path.join(GOLDEN, "traces")
    os.makedirs(outdir, exist_ok=True)
    w = bytes.fromhex("00112233445566778899aabbccddeeff")
    p4 = CodeParams.make(4, 1, max_payload=16)
    runs = {
        "cool-n4-silent": run_sync(
            "cool", p4, {i: w for i in range(1, 5)},
            AdversarySpec(corrupt=(4,), strategy="silent"), seed=1),
        "cool-n4-split": run_sync(
            "cool", p4, {i: w for i in range(1, 5)},
            AdversarySpec(corrupt=(4,), strategy="two-group-split"), seed=2),
        "rbc-balanced-n4-fifo": run_async(
            "rbc-balanced", p4, w, AdversarySpec(),
            SchedulerPolicy("fifo"), seed=1),
        "rbc-unbalanced-n4-random": run_async(
            "rbc-unbalanced", p4, w,
            AdversarySpec(corrupt=(4,), strategy="equivocate-symbols"),
            SchedulerPolicy("seeded-random", fairness=8), seed=3),
        "bba-n4": run_sync(
            "bba", p4, {1: 1, 2: 1, 3: 0, 4: 1},
            AdversarySpec(corrupt=(4,), strategy="si-flip"), seed=1),
    }
    for name, trace in runs.items():
        trace.save(os.path.join(outdir, f"{name}.jsonl"))
        print(f"traces/{name}.jsonl: {len(trace.envs)} envelopes, "
              f"outcome {trace.outcome}")


if __name__ == "__main__":
    os.makedirs(GOLDEN, exist_ok=True)
    make_vectors()
    make_traces()
