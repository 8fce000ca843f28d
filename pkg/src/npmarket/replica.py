"""Behaviour shared by the Raft and IBFT node implementations."""
from __future__ import annotations

from .chain import Block, Ledger
from .contract import WorldState
from .netsim import CostModel, Simulator


class Observer:
    """Hook points for metrics collection and property checks. All no-ops."""

    def on_block_applied(self, node_id: int, block: Block, receipts, now: float) -> None:
        pass

    def on_leader(self, node_id: int, term: int, now: float) -> None:
        pass

    def on_round_change(self, node_id: int, height: int, round_: int, now: float) -> None:
        pass


class Replica:
    """One blockchain node: a ledger, a transaction pool and a single CPU.

    CPU work is serialized: a job of positive cost starts when the previous
    job finishes and completes through a timer. Zero-cost jobs complete at
    the current instant without touching the CPU queue.
    """

    def __init__(self, node_id: int, sim: Simulator, genesis: WorldState, cost: CostModel,
                 observer: Observer | None = None, max_block_txs: int = 10, block_gas_limit_ms: float = 4000.0):
        self.node_id = node_id
        self.sim = sim
        self.ledger = Ledger(genesis.copy())
        self.cost = cost
        self.observer = observer or Observer()
        self.max_block_txs = max_block_txs
        self.block_gas_limit_ms = block_gas_limit_ms
        self.cpu_free_at = 0.0
        self.halted = False  # when set, no new blocks are started

    @property
    def n(self) -> int:
        return len(self.sim.nodes)

    @property
    def peers(self) -> list[int]:
        return [i for i in range(self.n) if i != self.node_id]

    def send(self, dst: int, msg) -> None:
        self.sim.send(self.node_id, dst, msg)

    def broadcast(self, msg) -> None:
        self.sim.broadcast(self.node_id, msg)

    def set_timer(self, delay: float, name: str, data=None) -> None:
        self.sim.set_timer(self.node_id, delay, name, data)

    def run_job(self, cost_ms: float, name: str, data=None) -> float:
        """Queue ``cost_ms`` of CPU work; fire timer ``name`` when it is done."""
        now = self.sim.now
        if cost_ms <= 0:
            self.sim.set_timer_at(self.node_id, now, name, data)
            return now
        start = max(now, self.cpu_free_at)
        self.cpu_free_at = start + cost_ms
        self.sim.set_timer_at(self.node_id, self.cpu_free_at, name, data)
        return self.cpu_free_at

    def registry_size(self) -> int:
        return self.ledger.state.next_provider_index - 1

    def select_txs(self, pool, skip=(), registry_size: int | None = None) -> list:
        """Take transactions in pool order, bounded by count and execution budget.

        The first transaction is always taken so an expensive call cannot
        stall the chain.
        """
        size = self.registry_size() if registry_size is None else registry_size
        chosen, spent = [], 0.0
        receipts = self.ledger.receipts
        for tx_id, tx in pool.items():
            if tx_id in skip or tx_id in receipts:
                continue
            c = self.cost.tx_cost(tx, size)
            if chosen and (len(chosen) >= self.max_block_txs or spent + c > self.block_gas_limit_ms):
                break
            chosen.append(tx)
            spent += c
            if tx.function == "addNetworkProvider":
                size += 1
        return chosen

    def commit(self, block: Block) -> list:
        receipts = self.ledger.append_block(block)
        self.observer.on_block_applied(self.node_id, block, receipts, self.sim.now)
        return receipts

    # event entry points, overridden by the consensus engines
    def start(self) -> None:
        """Arm initial timers; called once every node is registered."""

    def on_message(self, src: int, msg) -> None:
        raise NotImplementedError

    def on_timer(self, name: str, data) -> None:
        raise NotImplementedError

    def on_tx(self, tx) -> None:
        raise NotImplementedError

    def on_recover(self) -> None:
        self.cpu_free_at = self.sim.now
