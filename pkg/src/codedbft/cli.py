"""Command-line harness.

    codedbft run <config.toml> [--trace-dir DIR] [--jobs N] [--allow-subresilient]
    codedbft complexity [--protocol P] [--n-grid 4,7,..] [--l-grid 64,256,..] [--out F]
    codedbft replay <trace.jsonl>

``run`` executes every (scenario x seed) cell, writes a metrics CSV and a
violation-report JSON next to the config (or into --trace-dir), and exits 0
only when no cell produced violations or liveness failures; invalid configs
exit 2.  ``complexity`` measures the communication grids and reports per-cell
ratios against the claimed envelopes.  ``replay`` re-executes a trace file
from its embedded config and fails (exit 1) on any divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

from .adversary import AdversarySpec
from .coding import CodeParams, CodedSymbol
from . import messages as M
from .config import ConfigError, ScenarioConfig, load_config
from .engine import (ASYNC_PROTOCOLS, SchedulerPolicy, explore_async, run_async,
                     run_sync)
from .invariants import Violation, check_invariants
from .metrics import (ComplexityCell, ComplexityFit, agreement_envelope,
                      broadcast_envelope, collect_metrics)
from .rbc import BALANCED, UNBALANCED
from .trace import ExecutionTrace

CSV_COLUMNS = ["scenario", "seed", "protocol", "n", "t", "l", "adversary",
               "total_bits", "max_node_bits", "rounds", "depth", "outcome"]


def run_cell(cfg: ScenarioConfig, seed: int):
    """Execute one (scenario, seed) cell; returns (trace, violations)."""
    params = cfg.code_params()
    inputs = cfg.build_inputs(seed)
    if cfg.protocol in ASYNC_PROTOCOLS:
        if cfg.exhaustive:
            return _run_exploration(cfg, params, inputs)
        trace = run_async(cfg.protocol, params, inputs, cfg.adversary,
                          cfg.scheduler, seed, leader_id=cfg.leader,
                          allow_subresilient=cfg.allow_subresilient)
    else:
        trace = run_sync(cfg.protocol, params, inputs, cfg.adversary, seed,
                         allow_subresilient=cfg.allow_subresilient)
    return trace, check_invariants(trace)


def exploration_alternatives(params: CodeParams):
    """Restricted adversary alphabet for exhaustive exploration: indicator
    bits range over {0,1}; symbols may be zeroed; a full message may flip."""
    def alts(env):
        if env.tag in (M.SI1, M.SI2, M.READY):
            return [0, 1]
        if env.tag == M.SYMBOL and isinstance(env.payload, tuple):
            a, b = env.payload
            garbage = (CodedSymbol(a.index, b"\x00" * len(a.lanes)),
                       CodedSymbol(b.index, b"\x00" * len(b.lanes)))
            return [env.payload, garbage]
        if env.tag == M.LEADER_FULL and isinstance(env.payload, bytes):
            return [env.payload, bytes(x ^ 0xFF for x in env.payload)]
        if env.tag in (M.LEADER, M.INITIAL, M.CORRECTSYMBOL) \
                and isinstance(env.payload, CodedSymbol):
            return [env.payload,
                    CodedSymbol(env.payload.index, b"\x00" * len(env.payload.lanes))]
        return [env.payload]
    return alts


def _run_exploration(cfg: ScenarioConfig, params: CodeParams, leader_value: bytes):
    variant = BALANCED if cfg.protocol == "rbc-balanced" else UNBALANCED
    report = explore_async(
        params, leader_value, variant=variant, leader_id=cfg.leader,
        corrupt=cfg.adversary.corrupt,
        alternatives=exploration_alternatives(params) if cfg.adversary.corrupt else None,
        max_states=int(cfg.adversary.params.get("max_states", 200_000)))
    violations = [Violation("exploration", v) for v in report.violations]
    return report, violations


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, allow_subresilient=args.allow_subresilient)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    outdir = args.trace_dir or os.path.dirname(os.path.abspath(args.config))
    os.makedirs(outdir, exist_ok=True)

    def one(seed: int):
        return seed, run_cell(cfg, seed)

    results = []
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(one, cfg.seeds))
    else:
        results = [one(s) for s in cfg.seeds]

    rows, all_violations, liveness = [], [], False
    for seed, (trace, violations) in results:
        if isinstance(trace, ExecutionTrace):
            rep = collect_metrics(trace)
            rows.append([cfg.name, seed, cfg.protocol, cfg.n, cfg.t, cfg.l_bits,
                         cfg.adversary.strategy, rep.total_bits, rep.max_node_bits,
                         rep.rounds, rep.depth, rep.outcome])
            liveness |= trace.liveness_failure is not None
            if args.trace_dir:
                trace.save(os.path.join(outdir, f"{cfg.name}-s{seed}.jsonl"))
        else:  # exploration report
            rows.append([cfg.name, seed, cfg.protocol, cfg.n, cfg.t, cfg.l_bits,
                         cfg.adversary.strategy, 0, 0, 0, 0,
                         f"explored:{trace.states}"])
        for v in violations:
            all_violations.append({"scenario": cfg.name, "seed": seed,
                                   "kind": v.kind, "node": v.node, "detail": v.detail})

    csv_path = os.path.join(outdir, f"{cfg.name}-metrics.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)
    report_path = os.path.join(outdir, f"{cfg.name}-violations.json")
    with open(report_path, "w") as fh:
        json.dump(all_violations, fh, indent=2)
    print(f"{len(rows)} cells -> {csv_path}")
    if all_violations:
        print(f"{len(all_violations)} violations -> {report_path}", file=sys.stderr)
        return 1
    if liveness:
        print("liveness failure recorded", file=sys.stderr)
        return 1
    print("no violations")
    return 0


# -- complexity ----------------------------------------------------------------


def measure_agreement_grid(n_grid, l_grid, seed: int = 0) -> ComplexityFit:
    fit = ComplexityFit("cool")
    for n in n_grid:
        t = (n - 1) // 3
        if t < 1:
            continue  # log t degenerate; excluded from the fit
        for l_bits in l_grid:
            params = CodeParams.make(n, t, max_payload=-(-l_bits // 8))
            w = bytes((seed + i) % 256 for i in range(-(-l_bits // 8)))
            trace = run_sync("cool", params, {i: w for i in range(1, n + 1)},
                             AdversarySpec(), seed, snapshots="none")
            fit.cells.append(ComplexityCell(
                n=n, t=t, l_bits=l_bits, measured=trace.total_bits(),
                claimed=agreement_envelope(n, t, l_bits)))
    return fit


def measure_broadcast_grid(protocol: str, n_grid, l_grid, seed: int = 0) -> ComplexityFit:
    fit = ComplexityFit(protocol)
    for n in n_grid:
        t = (n - 1) // 3
        for l_bits in l_grid:
            params = CodeParams.make(n, t, max_payload=-(-l_bits // 8))
            w = bytes((seed + i) % 256 for i in range(-(-l_bits // 8)))
            trace = run_async(protocol, params, w, AdversarySpec(),
                              SchedulerPolicy("fifo"), seed)
            per_node = max(trace.node_bits(i) for i in range(1, n + 1))
            fit.cells.append(ComplexityCell(
                n=n, t=t, l_bits=l_bits, measured=per_node,
                claimed=broadcast_envelope(n, l_bits)))
    return fit


def measure_balance(n: int, l_bits: int, seed: int = 0) -> float:
    t = (n - 1) // 3
    params = CodeParams.make(n, t, max_payload=-(-l_bits // 8))
    w = bytes((seed + i) % 256 for i in range(-(-l_bits // 8)))
    trace = run_async("rbc-balanced", params, w, AdversarySpec(),
                      SchedulerPolicy("fifo"), seed, leader_id=1)
    return collect_metrics(trace).leader_balance(1, trace)


DEFAULT_N_GRID = (4, 7, 10, 16, 22, 31)
DEFAULT_L_GRID = (64, 256, 1024, 4096, 16384)


def cmd_complexity(args) -> int:
    n_grid = [int(x) for x in args.n_grid.split(",")]
    l_grid = [int(x) for x in args.l_grid.split(",")]
    report = {}
    fits = []
    if args.protocol in ("cool", "all"):
        fits.append(measure_agreement_grid(n_grid, l_grid, args.seed))
    if args.protocol in ("rbc-balanced", "all"):
        fits.append(measure_broadcast_grid("rbc-balanced", n_grid, l_grid, args.seed))
    if args.protocol in ("rbc-unbalanced",):
        fits.append(measure_broadcast_grid("rbc-unbalanced", n_grid, l_grid, args.seed))
    for fit in fits:
        summary = fit.summary()
        report[fit.protocol] = {"summary": summary, "cells": fit.rows()}
        print(f"{fit.protocol}: C={summary['fitted_constant']} "
              f"ratios [{summary['min_ratio']}, {summary['max_ratio']}] "
              f"stability x{summary['stability']}")
        for row in fit.rows():
            print(f"  n={row['n']:>2} t={row['t']:>2} l={row['l']:>6} "
                  f"bits={row['bits']:>10} ratio={row['ratio']:>8}")
    if args.protocol in ("rbc-balanced", "all"):
        bal = measure_balance(max(n_grid), max(l_grid), args.seed)
        report["balance"] = {"n": max(n_grid), "l": max(l_grid),
                             "leader_over_mean": round(bal, 3)}
        print(f"balance: leader/mean = {bal:.2f} at n={max(n_grid)} l={max(l_grid)}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2)
        print(f"report -> {args.out}")
    return 0


# -- replay --------------------------------------------------------------------


def rerun_from_config(config: dict, seed: int) -> ExecutionTrace:
    params = CodeParams.make(config["n"], config["t"], k=config["k"],
                             c=config["c"], msg_bits=config["msg_bits"])
    adversary = AdversarySpec(corrupt=tuple(config["corrupt"]),
                              strategy=config["strategy"])
    protocol = config["protocol"]
    if protocol in ASYNC_PROTOCOLS:
        policy = SchedulerPolicy(kind=config["policy"],
                                 fairness=config["fairness"],
                                 targets=tuple(config.get("targets", ())))
        return run_async(protocol, params, bytes.fromhex(config["leader_value"]),
                         adversary, policy, seed, leader_id=config["leader"],
                         instance=config["instance"],
                         allow_subresilient=config.get("allow_subresilient", False))
    inputs = {}
    for key, val in config["inputs"].items():
        inputs[int(key)] = bytes.fromhex(val) if isinstance(val, str) else val
    return run_sync(protocol, params, inputs, adversary, seed,
                    instance=config["instance"],
                    allow_subresilient=config.get("allow_subresilient", False))


def replay_trace(trace: ExecutionTrace) -> tuple[bool, str]:
    """Re-execute from the embedded config; byte-identical or divergent."""
    fresh = rerun_from_config(trace.config, trace.seed)
    if fresh.to_jsonl() != trace.to_jsonl():
        out_a = {i: r["value"] for i, r in trace.outputs.items()}
        out_b = {i: r["value"] for i, r in fresh.outputs.items()}
        if out_a != out_b:
            return False, f"outputs diverge: {out_a} vs {out_b}"
        return False, "trace bytes diverge from deterministic re-execution"
    return True, "identical"


def cmd_replay(args) -> int:
    try:
        trace = ExecutionTrace.load(args.trace)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot load trace: {exc}", file=sys.stderr)
        return 2
    ok, detail = replay_trace(trace)
    violations = check_invariants(trace)
    for v in violations:
        print(str(v), file=sys.stderr)
    if not ok:
        print(f"replay divergence: {detail}", file=sys.stderr)
        return 1
    print(f"replay ok ({len(trace.envs)} envelopes)")
    return 1 if violations else 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="codedbft")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--trace-dir", default=None)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--allow-subresilient", action="store_true")
    p_run.set_defaults(fn=cmd_run)

    p_cx = sub.add_parser("complexity", help="measure communication envelopes")
    p_cx.add_argument("--protocol", default="all",
                      choices=["cool", "rbc-balanced", "rbc-unbalanced", "all"])
    p_cx.add_argument("--n-grid", default=",".join(map(str, DEFAULT_N_GRID)))
    p_cx.add_argument("--l-grid", default=",".join(map(str, DEFAULT_L_GRID)))
    p_cx.add_argument("--seed", type=int, default=0)
    p_cx.add_argument("--out", default=None)
    p_cx.set_defaults(fn=cmd_complexity)

    p_rp = sub.add_parser("replay", help="re-execute and verify a trace file")
    p_rp.add_argument("trace")
    p_rp.set_defaults(fn=cmd_replay)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
