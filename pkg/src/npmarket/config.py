"""Experiment configuration: JSON loading and validation."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .bench.workload import ADD, REQUEST, RETURN, WorkloadSpec
from .chain import FUNCTIONS
from .ibft import IbftConfig
from .netsim import CostModel, LinkModel, Topology, INTRA_CLOUD, CLOUD_REMOTE
from .raft import RaftConfig

CONSENSUS = ("raft", "ibft")
MIXED = "mixed"
ROUNDS = (*FUNCTIONS, MIXED)
DEFAULT_MIX = {ADD: 0.2, REQUEST: 0.5, RETURN: 0.3}
SEED_MAX = 2 ** 64 - 1


class ConfigError(ValueError):
    pass


@dataclass
class WorkloadConfig:
    duration_s: float = 60.0
    tx_timeout_s: float = 60.0
    warmup_s: float = 5.0
    registry_size: int = 5
    mix: dict = field(default_factory=lambda: dict(DEFAULT_MIX))
    invalid_payment_frac: float = 0.0
    no_match_frac: float = 0.0

    def spec(self, itr: float, round_name: str) -> WorkloadSpec:
        mix = self.mix if round_name == MIXED else {round_name: 1.0}
        return WorkloadSpec(itr=itr, duration_s=self.duration_s, mix=mix, tx_timeout_s=self.tx_timeout_s,
                            registry_size=self.registry_size, warmup_s=self.warmup_s,
                            invalid_payment_frac=self.invalid_payment_frac, no_match_frac=self.no_match_frac)


@dataclass
class ExperimentConfig:
    consensus: list = field(default_factory=lambda: list(CONSENSUS))
    itrs: list = field(default_factory=lambda: [2, 5, 10, 20, 40, 60])
    rounds: list = field(default_factory=lambda: list(ROUNDS))
    seed: Optional[int] = None
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    topology: Topology = field(default_factory=Topology.default)
    cost: CostModel = field(default_factory=CostModel)
    raft: RaftConfig = field(default_factory=RaftConfig)
    ibft: IbftConfig = field(default_factory=IbftConfig)
    block_gas_limit_ms: float = 4000.0
    quiesce_limit_s: float = 600.0

    def validate(self) -> "ExperimentConfig":
        if not self.consensus or any(c not in CONSENSUS for c in self.consensus):
            raise ConfigError(f"consensus must be a non-empty subset of {list(CONSENSUS)}, got {self.consensus}")
        if not self.rounds or any(r not in ROUNDS for r in self.rounds):
            raise ConfigError(f"rounds must be a non-empty subset of {list(ROUNDS)}, got {self.rounds}")
        if not self.itrs:
            raise ConfigError("itrs must not be empty")
        if self.seed is not None and not (isinstance(self.seed, int) and 0 <= self.seed <= SEED_MAX):
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.topology.n < 1:
            raise ConfigError("topology needs at least one node")
        if self.cost.c_base_ms < 0 or self.cost.c_scan_ms < 0:
            raise ConfigError("cost model constants must be non-negative")
        if self.block_gas_limit_ms <= 0 or self.quiesce_limit_s <= 0:
            raise ConfigError("block_gas_limit_ms and quiesce_limit_s must be positive")
        lo, hi = self.raft.election_timeout_ms
        if not 0 < lo <= hi or self.raft.heartbeat_ms <= 0 or self.raft.heartbeat_ms >= lo:
            raise ConfigError("raft needs 0 < heartbeat_ms < election_timeout_ms[0] <= election_timeout_ms[1]")
        if self.raft.max_block_txs < 1 or self.ibft.max_block_txs < 1:
            raise ConfigError("max_block_txs must be at least 1")
        if self.ibft.block_period_ms < 0 or self.ibft.round_timeout_ms <= 0:
            raise ConfigError("ibft block_period_ms must be >= 0 and round_timeout_ms > 0")
        for itr in self.itrs:
            for r in self.rounds:
                try:
                    self.workload.spec(itr, r)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"workload for itr={itr}, round={r}: {exc}") from None
        return self


def _take(d: dict, where: str, allowed) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    return d


def _link(d, where: str, default: LinkModel) -> LinkModel:
    if d is None:
        return default
    _take(d, where, ("mean_ms", "stddev_ms", "min_ms"))
    try:
        return LinkModel(float(d.get("mean_ms", default.mean_ms)), float(d.get("stddev_ms", default.stddev_ms)),
                         float(d.get("min_ms", default.min_ms)))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def topology_from_dict(d: dict) -> Topology:
    _take(d, "topology", ("sites", "intra_site", "inter_site", "loss_rate", "links", "losses"))
    sites = d.get("sites", Topology.default().sites)
    if not isinstance(sites, list) or not all(isinstance(s, str) for s in sites):
        raise ConfigError("topology.sites must be a list of site labels")
    links, losses = {}, {}
    for item in d.get("links", []):
        _take(item, "topology.links[]", ("from", "to", "mean_ms", "stddev_ms", "min_ms"))
        links[(item["from"], item["to"])] = _link(
            {k: v for k, v in item.items() if k not in ("from", "to")}, "topology.links[]", INTRA_CLOUD)
    for item in d.get("losses", []):
        _take(item, "topology.losses[]", ("from", "to", "rate"))
        losses[(item["from"], item["to"])] = float(item["rate"])
    try:
        return Topology(list(sites), _link(d.get("intra_site"), "topology.intra_site", INTRA_CLOUD),
                        _link(d.get("inter_site"), "topology.inter_site", CLOUD_REMOTE),
                        float(d.get("loss_rate", 0.0)), links, losses)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def config_from_dict(d: dict, base_dir: str = ".") -> ExperimentConfig:
    _take(d, "config", ("consensus", "itrs", "rounds", "seed", "workload", "topology", "cost_model", "raft",
                        "ibft", "block_gas_limit_ms", "quiesce_limit_s"))
    cfg = ExperimentConfig()
    try:
        if "consensus" in d:
            c = d["consensus"]
            cfg.consensus = [c] if isinstance(c, str) else list(c)
        if "itrs" in d:
            cfg.itrs = [float(x) for x in d["itrs"]]
        if "rounds" in d:
            cfg.rounds = list(d["rounds"])
        if "seed" in d:
            cfg.seed = d["seed"]
        if "workload" in d:
            w = _take(d["workload"], "workload", WorkloadConfig.__dataclass_fields__)
            cfg.workload = WorkloadConfig(**w)
        topo = d.get("topology")
        if isinstance(topo, str):  # reference to a separate topology file
            topo = _read_json(os.path.join(base_dir, topo))
        if topo is not None:
            cfg.topology = topology_from_dict(topo)
        if "cost_model" in d:
            cfg.cost = CostModel(**_take(d["cost_model"], "cost_model", ("c_base_ms", "c_scan_ms")))
        if "raft" in d:
            r = dict(_take(d["raft"], "raft", RaftConfig.__dataclass_fields__))
            if "election_timeout_ms" in r:
                r["election_timeout_ms"] = tuple(float(x) for x in r["election_timeout_ms"])
            cfg.raft = RaftConfig(**r)
        if "ibft" in d:
            cfg.ibft = IbftConfig(**_take(d["ibft"], "ibft", IbftConfig.__dataclass_fields__))
        if "block_gas_limit_ms" in d:
            cfg.block_gas_limit_ms = float(d["block_gas_limit_ms"])
        if "quiesce_limit_s" in d:
            cfg.quiesce_limit_s = float(d["quiesce_limit_s"])
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return cfg.validate()


def _read_json(path: str) -> dict:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path: str) -> ExperimentConfig:
    return config_from_dict(_read_json(path), os.path.dirname(os.path.abspath(path)))
