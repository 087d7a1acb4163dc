"""Scenario configuration: TOML files with [scenario], [adversary],
[scheduler], and [run] sections, plus the input-assignment builder shared by
the CLI and the test harness.

Input patterns: ``unanimous`` (one value for every node), ``split`` (two
values over the index halves), ``distinct`` (a fresh value per node),
``leader`` (broadcast protocols).  Values not given explicitly are derived
deterministically from the scenario seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

import toml

from .adversary import AdversarySpec
from .coding import CodeParams
from .engine import ASYNC_PROTOCOLS, SYNC_PROTOCOLS, SchedulerPolicy

PROTOCOLS = SYNC_PROTOCOLS + ASYNC_PROTOCOLS
PATTERNS = ("unanimous", "split", "distinct", "leader")


class ConfigError(Exception):
    pass


@dataclass
class ScenarioConfig:
    name: str
    protocol: str
    n: int
    t: int
    l_bits: int
    pattern: str = "unanimous"
    value: Optional[str] = None          # hex
    values: list[str] = field(default_factory=list)
    bits: Optional[list[int]] = None     # binary-agreement inputs
    leader: int = 1
    adversary: AdversarySpec = field(default_factory=AdversarySpec)
    scheduler: SchedulerPolicy = field(default_factory=SchedulerPolicy)
    exhaustive: bool = False
    seeds: list[int] = field(default_factory=lambda: [1])
    allow_subresilient: bool = False

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.l_bits < 1:
            raise ConfigError("l_bits must be >= 1")
        if self.n < 1 or self.t < 0:
            raise ConfigError("need n >= 1 and t >= 0")
        if self.n < 3 * self.t + 1 and not self.allow_subresilient:
            raise ConfigError(
                f"n={self.n} < 3t+1={3 * self.t + 1} (use allow_subresilient to study the boundary)")
        if self.pattern not in PATTERNS:
            raise ConfigError(f"unknown input pattern {self.pattern!r}")
        if self.protocol in ASYNC_PROTOCOLS and not 1 <= self.leader <= self.n:
            raise ConfigError("leader index out of range")
        try:
            self.adversary.validate(self.n, self.t)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        try:
            self.scheduler.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for h in ([self.value] if self.value else []) + list(self.values):
            try:
                bytes.fromhex(h)
            except ValueError as exc:
                raise ConfigError(f"bad hex value {h!r}") from exc
        if self.bits is not None and any(b not in (0, 1) for b in self.bits):
            raise ConfigError("bits entries must be 0 or 1")

    @property
    def l_bytes(self) -> int:
        return -(-self.l_bits // 8)

    def code_params(self) -> CodeParams:
        return CodeParams.make(self.n, self.t, max_payload=self.l_bytes)

    def derive_value(self, seed: int, salt: str = "") -> bytes:
        rng = random.Random(f"{self.name}/{seed}/{salt}")
        return rng.randbytes(self.l_bytes)

    def build_inputs(self, seed: int):
        """Per-node inputs for sync protocols, or the leader value for rbc."""
        n = self.n
        if self.protocol == "bba":
            if self.bits is not None:
                if len(self.bits) != n:
                    raise ConfigError("bits list must have one entry per node")
                return dict(enumerate(self.bits, start=1))
            if self.pattern == "unanimous":
                return {i: 1 for i in range(1, n + 1)}
            return {i: (1 if i <= n // 2 else 0) for i in range(1, n + 1)}
        if self.protocol in ASYNC_PROTOCOLS or self.pattern == "leader":
            w = bytes.fromhex(self.value) if self.value else self.derive_value(seed)
            return w
        if self.pattern == "unanimous":
            w = bytes.fromhex(self.value) if self.value else self.derive_value(seed)
            return {i: w for i in range(1, n + 1)}
        if self.pattern == "split":
            if len(self.values) >= 2:
                a, b = bytes.fromhex(self.values[0]), bytes.fromhex(self.values[1])
            else:
                a, b = self.derive_value(seed, "a"), self.derive_value(seed, "b")
            return {i: (a if i <= n // 2 else b) for i in range(1, n + 1)}
        # distinct
        return {i: self.derive_value(seed, f"node{i}") for i in range(1, n + 1)}


def load_config(path: str, allow_subresilient: bool = False) -> ScenarioConfig:
    try:
        raw = toml.load(path)
    except (OSError, toml.TomlDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw, default_name=path,
                            allow_subresilient=allow_subresilient)


def config_from_dict(raw: dict, default_name: str = "scenario",
                     allow_subresilient: bool = False) -> ScenarioConfig:
    sc = raw.get("scenario")
    if not isinstance(sc, dict):
        raise ConfigError("missing [scenario] section")
    try:
        cfg = ScenarioConfig(
            name=sc.get("name", default_name),
            protocol=sc["protocol"],
            n=int(sc["n"]),
            t=int(sc["t"]),
            l_bits=int(sc.get("l_bits", 64)),
            pattern=sc.get("pattern", "unanimous"),
            value=sc.get("value"),
            values=list(sc.get("values", [])),
            bits=sc.get("bits"),
            leader=int(sc.get("leader", 1)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing scenario key {exc}") from exc
    adv = raw.get("adversary", {})
    cfg.adversary = AdversarySpec(
        corrupt=tuple(int(j) for j in adv.get("corrupt", [])),
        strategy=adv.get("strategy", "none"),
        params={k: v for k, v in adv.items() if k not in ("corrupt", "strategy")},
    )
    sched = raw.get("scheduler", {})
    kind = sched.get("kind", "fifo")
    cfg.exhaustive = kind == "exhaustive-small"
    cfg.scheduler = SchedulerPolicy(
        kind="fifo" if cfg.exhaustive else kind,
        fairness=int(sched.get("fairness", 64)),
        targets=tuple(int(j) for j in sched.get("targets", [])),
    )
    if cfg.adversary.strategy == "delay-targets":
        cfg.scheduler = SchedulerPolicy(
            kind="adversarial-delay", fairness=cfg.scheduler.fairness,
            targets=tuple(cfg.adversary.params.get("targets", cfg.adversary.corrupt)))
    run = raw.get("run", {})
    cfg.seeds = [int(s) for s in run.get("seeds", [1])]
    cfg.allow_subresilient = bool(run.get("allow_subresilient", False)) or allow_subresilient
    cfg.validate()
    return cfg
