"""Deterministic discrete-event scheduler and WAN model.

All randomness comes from one ``random.Random`` seeded at construction, and
events fire in ``(fire_time, sequence)`` order, so a run is a pure function
of its configuration and seed.
"""
from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .chain import RequestResources, AddNetworkProvider

DELIVER, TIMER, INJECT, FAULT = "deliver", "timer", "inject", "fault"


class SchedulePast(ValueError):
    pass


@dataclass(frozen=True)
class LinkModel:
    mean_ms: float
    stddev_ms: float
    min_ms: float

    def __post_init__(self):
        if self.min_ms < 0 or self.mean_ms < self.min_ms or self.stddev_ms < 0:
            raise ValueError(f"invalid link model {self}")


INTRA_CLOUD = LinkModel(2.0, 0.5, 0.1)
# ~500 km internet path between the cloud and the remote site
CLOUD_REMOTE = LinkModel(25.0, 5.0, 5.0)


@dataclass
class Topology:
    sites: list[str]
    intra_site: LinkModel = INTRA_CLOUD
    inter_site: LinkModel = CLOUD_REMOTE
    loss_rate: float = 0.0
    # (from, to) -> LinkModel / loss probability, for individual pairs
    link_overrides: dict = field(default_factory=dict)
    loss_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        for p in [self.loss_rate, *self.loss_overrides.values()]:
            if not 0 <= p < 1:
                raise ValueError(f"loss rate must be in [0, 1): {p}")

    @classmethod
    def default(cls) -> "Topology":
        """Four co-located cloud nodes plus one remote node."""
        return cls(["cloud_a"] * 4 + ["remote"])

    @property
    def n(self) -> int:
        return len(self.sites)

    def link(self, a: int, b: int) -> LinkModel:
        if (a, b) in self.link_overrides:
            return self.link_overrides[(a, b)]
        return self.intra_site if self.sites[a] == self.sites[b] else self.inter_site

    def loss(self, a: int, b: int) -> float:
        return self.loss_overrides.get((a, b), self.loss_rate)


@dataclass
class CostModel:
    """Simulated CPU time to execute contract calls.

    Registration and return cost ``c_base_ms``; a resource request also pays
    ``c_scan_ms`` per registered provider, for the registry scan.
    """

    c_base_ms: float = 1.0
    c_scan_ms: float = 5.0

    def tx_cost(self, tx, registry_size: int) -> float:
        if isinstance(tx.call, RequestResources):
            return self.c_base_ms + self.c_scan_ms * registry_size
        return self.c_base_ms

    def block_cost(self, txs, registry_size: int) -> float:
        total = 0.0
        for tx in txs:
            total += self.tx_cost(tx, registry_size)
            if isinstance(tx.call, AddNetworkProvider):
                registry_size += 1
        return total

    def capacity_tps(self, registry_size: int) -> float:
        """Sequential-execution ceiling for a request-only workload."""
        return 1000.0 / (self.c_base_ms + self.c_scan_ms * registry_size)


@dataclass(frozen=True)
class Crash:
    node: int
    at: float


@dataclass(frozen=True)
class Recover:
    node: int
    at: float


@dataclass(frozen=True)
class Byzantine:
    node: int
    policy: Callable  # (msg, src, dst, rng) -> msg | None
    at: float = 0.0


class Simulator:
    def __init__(self, topology: Topology, seed: int, trace: Optional[list] = None):
        self.topology = topology
        self.rng = random.Random(seed)
        self.now = 0.0
        self.nodes: list = []
        self.crashed: set[int] = set()
        self.byzantine: dict[int, Callable] = {}
        self.sent = 0
        self.delivered = 0
        self._queue: list = []
        self._seq = itertools.count()
        self._epoch: dict[int, int] = {}
        self._trace = trace

    def add_node(self, node) -> None:
        assert node.node_id == len(self.nodes), "node ids must be assigned densely from 0"
        self.nodes.append(node)
        self._epoch[node.node_id] = 0

    def start(self) -> None:
        for node in self.nodes:
            node.start()

    def schedule(self, at: float, kind: str, a=None, b=None, c=None) -> None:
        if at < self.now:
            raise SchedulePast(f"event at {at} is before now={self.now}")
        heapq.heappush(self._queue, (at, next(self._seq), kind, a, b, c))

    def pending(self) -> int:
        return len(self._queue)

    # -- services offered to nodes --------------------------------------------

    def send(self, src: int, dst: int, msg) -> None:
        if src in self.crashed:
            return
        policy = self.byzantine.get(src)
        if policy is not None:
            msg = policy(msg, src, dst, self.rng)
            if msg is None:
                return
        self.sent += 1
        if src == dst:
            self.schedule(self.now, DELIVER, msg, src, dst)
            return
        topo = self.topology
        if topo.loss(src, dst) and self.rng.random() < topo.loss(src, dst):
            return
        link = topo.link(src, dst)
        delay = max(link.min_ms, self.rng.gauss(link.mean_ms, link.stddev_ms))
        self.schedule(self.now + delay, DELIVER, msg, src, dst)

    def broadcast(self, src: int, msg, include_self: bool = False) -> None:
        for dst in range(len(self.nodes)):
            if dst != src or include_self:
                self.send(src, dst, msg)

    def set_timer(self, node: int, delay: float, name: str, data=None) -> None:
        self.set_timer_at(node, self.now + delay, name, data)

    def set_timer_at(self, node: int, at: float, name: str, data=None) -> None:
        self.schedule(at, TIMER, node, (self._epoch[node], name), data)

    def inject_tx(self, tx, node: int, at: float) -> None:
        self.schedule(at, INJECT, tx, node)

    def inject_fault(self, action) -> None:
        if not 0 <= action.node < len(self.nodes):
            raise ValueError(f"no node {action.node}")
        self.schedule(action.at, FAULT, action)

    # -- main loop ------------------------------------------------------------

    def run_until(self, t_end: float) -> None:
        queue = self._queue
        while queue and queue[0][0] <= t_end:
            at, seq, kind, a, b, c = heapq.heappop(queue)
            self.now = at
            if self._trace is not None:
                self._trace.append(self._format(at, seq, kind, a, b, c))
            self._dispatch(kind, a, b, c)
        self.now = max(self.now, t_end)

    def _dispatch(self, kind, a, b, c) -> None:
        if kind == DELIVER:
            if c in self.crashed:
                return
            self.delivered += 1
            self.nodes[c].on_message(b, a)
        elif kind == TIMER:
            epoch, name = b
            if a in self.crashed or epoch != self._epoch[a]:
                return
            self.nodes[a].on_timer(name, c)
        elif kind == INJECT:
            if b in self.crashed:
                return
            self.nodes[b].on_tx(a)
        elif kind == FAULT:
            self._apply_fault(a)

    def _apply_fault(self, action) -> None:
        node = action.node
        if isinstance(action, Crash):
            if node not in self.crashed:
                self.crashed.add(node)
                self._epoch[node] += 1  # timers armed before the crash never fire
        elif isinstance(action, Recover):
            if node in self.crashed:
                self.crashed.discard(node)
                self.nodes[node].on_recover()
        elif isinstance(action, Byzantine):
            self.byzantine[node] = action.policy
        else:
            raise TypeError(f"unknown fault {action!r}")

    @staticmethod
    def _format(at, seq, kind, a, b, c) -> str:
        if kind == DELIVER:
            return f"{at:.6f} {seq} deliver {b}->{c} {type(a).__name__} {_brief(a)}"
        if kind == TIMER:
            return f"{at:.6f} {seq} timer {a} {b[1]} {c!r}"
        if kind == INJECT:
            return f"{at:.6f} {seq} inject {b} tx={a.tx_id}"
        return f"{at:.6f} {seq} fault {a!r}"


def _brief(msg) -> str:
    brief = getattr(msg, "brief", None)
    return brief() if brief else ""
