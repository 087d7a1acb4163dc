#!/usr/bin/env python3
"""Run the full adversary x input-pattern x scheduler sweep outside pytest and
print a per-cell summary.  Useful for soak runs with more seeds than the
acceptance suite uses.

    python scripts/adversary_sweep.py [seeds-per-cell]
"""

import os
import random
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from codedbft.adversary import AdversarySpec
from codedbft.coding import CodeParams
from codedbft.engine import SchedulerPolicy, run_async, run_sync
from codedbft.invariants import check_invariants

STRATEGIES = ["silent", "random-bytes", "equivocate-symbols",
              "two-group-split", "si-flip", "scripted-rushing"]


def sweep_sync(seeds: int) -> int:
    bad = 0
    for n in (4, 7, 10, 13):
        t = (n - 1) // 3
        params = CodeParams.make(n, t, max_payload=8)
        corrupt = tuple(range(n - t + 1, n + 1))
        for pattern in ("unanimous", "split", "distinct"):
            for strategy in STRATEGIES:
                t0 = time.time()
                fails = 0
                for seed in range(seeds):
                    rng = random.Random((n, pattern, strategy, seed).__repr__())
                    if pattern == "unanimous":
                        w = rng.randbytes(8)
                        inputs = {i: w for i in range(1, n + 1)}
                    elif pattern == "split":
                        a, b = rng.randbytes(8), rng.randbytes(8)
                        inputs = {i: a if i <= n // 2 else b for i in range(1, n + 1)}
                    else:
                        inputs = {i: rng.randbytes(8) for i in range(1, n + 1)}
                    trace = run_sync("cool", params, inputs,
                                     AdversarySpec(corrupt=corrupt, strategy=strategy),
                                     seed=seed)
                    fails += bool(check_invariants(trace))
                bad += fails
                print(f"cool n={n:2d} {pattern:9s} {strategy:18s} "
                      f"{seeds} seeds {'OK' if not fails else f'{fails} FAIL'} "
                      f"({time.time() - t0:.1f}s)")
    return bad


def sweep_async(seeds: int) -> int:
    bad = 0
    for n in (4, 7, 10):
        t = (n - 1) // 3
        params = CodeParams.make(n, t, max_payload=8)
        corrupt = tuple(range(n - t + 1, n + 1))
        for protocol in ("rbc-balanced", "rbc-unbalanced"):
            for strategy in STRATEGIES[:4] + ["ready-spam", "two-face-leader",
                                              "silent-after-half"]:
                leaderish = strategy in ("two-face-leader", "silent-after-half")
                spec = AdversarySpec(corrupt=(1,) if leaderish else corrupt,
                                     strategy=strategy)
                fails = 0
                t0 = time.time()
                for seed in range(seeds):
                    trace = run_async(protocol, params, bytes(range(8)), spec,
                                      SchedulerPolicy("seeded-random", fairness=8),
                                      seed, leader_id=1)
                    fails += bool(check_invariants(trace))
                bad += fails
                print(f"{protocol} n={n:2d} {strategy:18s} {seeds} seeds "
                      f"{'OK' if not fails else f'{fails} FAIL'} "
                      f"({time.time() - t0:.1f}s)")
    return bad


if __name__ == "__main__":
    seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 50
    failures = sweep_sync(seeds) + sweep_async(seeds)
    print(f"total failing cells: {failures}")
    sys.exit(1 if failures else 0)
