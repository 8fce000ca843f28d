"""Istanbul BFT block finalization.

Each height runs PRE-PREPARE / PREPARE / COMMIT rounds with a round-robin
proposer. A node that sees a prepare quorum locks on the block and will only
prepare that block again at the same height; round changes carry the lock so
the next proposer can re-propose it. Finalized blocks are never replaced.

The quorum is ``ceil((N + F + 1) / 2)`` with ``F = (N - 1) // 3``; any two
quorums then share at least one honest validator.
"""
from __future__ import annotations

import enum
import hashlib
from collections import OrderedDict, defaultdict
from dataclasses import dataclass, replace
from typing import Optional

from .chain import Block, BrokenChain, make_block
from .replica import Replica

SYNC_BATCH = 256
FUTURE_HEIGHT_WINDOW = 8


def max_faulty(n: int) -> int:
    return (n - 1) // 3


def quorum_size(n: int) -> int:
    return (n + max_faulty(n) + 2) // 2


class Phase(enum.Enum):
    AWAITING_PROPOSAL = "awaiting_proposal"
    PREPREPARED = "preprepared"
    PREPARED = "prepared"
    COMMITTED = "committed"


@dataclass(frozen=True)
class IbftConfig:
    block_period_ms: float = 1000.0
    round_timeout_ms: float = 10000.0
    max_block_txs: int = 500


@dataclass(frozen=True)
class PrePrepare:
    height: int
    round: int
    block: Block

    def brief(self):
        return f"h={self.height} r={self.round} {self.block.hash.hex()[:10]} txs={len(self.block.txs)}"


@dataclass(frozen=True)
class Prepare:
    height: int
    round: int
    digest: bytes

    def brief(self):
        return f"h={self.height} r={self.round} {self.digest.hex()[:10]}"


@dataclass(frozen=True)
class Commit:
    height: int
    round: int
    digest: bytes

    def brief(self):
        return f"h={self.height} r={self.round} {self.digest.hex()[:10]}"


@dataclass(frozen=True)
class RoundChange:
    height: int
    round: int
    locked_round: int
    locked_block: Optional[Block]

    def brief(self):
        return f"h={self.height} r={self.round} locked={self.locked_round}"


@dataclass(frozen=True)
class TxGossip:
    txs: tuple

    def brief(self):
        return f"n={len(self.txs)}"


@dataclass(frozen=True)
class SyncRequest:
    from_height: int

    def brief(self):
        return f"from={self.from_height}"


@dataclass(frozen=True)
class SyncReply:
    items: tuple  # (Block, frozenset of commit signers)

    def brief(self):
        return f"n={len(self.items)}"


class IbftNode(Replica):
    def __init__(self, node_id, sim, genesis, cost, observer=None, config: IbftConfig = IbftConfig(),
                 block_gas_limit_ms: float = 4000.0):
        super().__init__(node_id, sim, genesis, cost, observer, config.max_block_txs, block_gas_limit_ms)
        self.config = config
        self.pool: OrderedDict = OrderedDict()
        self.executed: set[bytes] = set()
        self.seals: dict[int, frozenset] = {}
        self.future: list = []
        self._token = 0
        self._last_sync_request = -1e18

    def start(self) -> None:
        self.start_height()

    # -- bookkeeping ------------------------------------------------------------

    @property
    def f(self) -> int:
        return max_faulty(self.n)

    @property
    def quorum(self) -> int:
        return quorum_size(self.n)

    def proposer(self, height: int, round_: int) -> int:
        return (height + round_) % self.n

    def round_timeout(self, round_: int) -> float:
        return self.config.round_timeout_ms * (2 ** round_)

    def arm_round_timer(self, delay: float) -> None:
        self._token += 1
        self.set_timer(delay, "round_timeout", (self.height, self.round, self._token))

    def start_height(self) -> None:
        self.height = self.ledger.height + 1
        self.round = 0
        self.phase = Phase.AWAITING_PROPOSAL
        self.proposal: Optional[Block] = None
        self.locked: Optional[Block] = None
        self.locked_round = -1
        self.prepares = defaultdict(set)
        self.commits = defaultdict(set)
        self.round_changes = defaultdict(dict)
        self.proposed: set[int] = set()
        period = self.config.block_period_ms
        self.arm_round_timer(period + self.round_timeout(0))
        if self.proposer(self.height, 0) == self.node_id:
            self.set_timer(period, "propose", (self.height, 0))
        self.replay_future()

    # -- events ---------------------------------------------------------------

    def on_tx(self, tx) -> None:
        if tx.tx_id in self.ledger.receipts or tx.tx_id in self.pool:
            return
        self.pool[tx.tx_id] = tx
        self.broadcast(TxGossip((tx,)))

    def on_timer(self, name, data) -> None:
        if name == "propose":
            if data == (self.height, self.round):
                self.propose()
        elif name == "round_timeout":
            h, r, token = data
            if token != self._token or (h, r) != (self.height, self.round):
                return
            if self.halted:
                # no new blocks, but a lagging node still fetches finalized ones
                self.broadcast(SyncRequest(self.height))
                self.arm_round_timer(self.round_timeout(0))
            else:
                self.move_to_round(self.round + 1)
        elif name == "built":
            self.on_built(*data)
        elif name == "validated":
            self.on_validated(*data)

    def on_message(self, src, msg) -> None:
        if isinstance(msg, TxGossip):
            for tx in msg.txs:
                if tx.tx_id not in self.ledger.receipts:
                    self.pool.setdefault(tx.tx_id, tx)
            return
        if isinstance(msg, SyncRequest):
            self.send_sync(src, msg.from_height)
            return
        if isinstance(msg, SyncReply):
            self.on_sync_reply(msg)
            return
        if msg.height < self.height:
            if isinstance(msg, RoundChange):
                self.send_sync(src, msg.height)  # the sender is behind
            return
        if msg.height > self.height or msg.round > self.round:
            if isinstance(msg, RoundChange) and msg.height == self.height:
                self.on_round_change(src, msg)
                return
            self.buffer(src, msg)
            return
        if msg.round < self.round and not isinstance(msg, RoundChange):
            return
        if isinstance(msg, PrePrepare):
            self.on_preprepare(src, msg)
        elif isinstance(msg, Prepare):
            self.prepares[(msg.round, msg.digest)].add(src)
            self.check_prepared()
        elif isinstance(msg, Commit):
            self.commits[(msg.round, msg.digest)].add(src)
            self.check_committed()
        elif isinstance(msg, RoundChange):
            self.on_round_change(src, msg)

    def on_recover(self) -> None:
        super().on_recover()
        self.future.clear()
        self.start_height()
        self.broadcast(SyncRequest(self.height))

    # -- proposing --------------------------------------------------------------

    def propose(self) -> None:
        if self.halted or self.round in self.proposed:
            return
        if self.proposer(self.height, self.round) != self.node_id:
            return
        self.proposed.add(self.round)
        block = self.locked or self.justified_block()
        if block is None:
            tip = self.ledger.tip
            txs = self.select_txs(self.pool)
            block = make_block(self.height, tip.hash, self.node_id, max(int(self.sim.now), tip.timestamp), txs)
        cost = 0.0 if block.hash in self.executed else self.cost.block_cost(block.txs, self.registry_size())
        self.run_job(cost, "built", (self.height, self.round, block))

    def justified_block(self) -> Optional[Block]:
        """Highest-round locked block reported in this round's ROUND-CHANGE messages."""
        best, best_round = None, -1
        for locked_round, block in self.round_changes[self.round].values():
            if block is not None and locked_round > best_round and self.valid_block(block):
                best, best_round = block, locked_round
        return best

    def on_built(self, height, round_, block) -> None:
        if (height, round_) != (self.height, self.round):
            return
        self.executed.add(block.hash)
        self.broadcast(PrePrepare(height, round_, block))
        self.proposal = block
        self.on_validated(height, round_, block.hash)

    def valid_block(self, block: Block) -> bool:
        tip = self.ledger.tip
        if block.height != self.height or block.prev_hash != tip.hash or block.timestamp < tip.timestamp:
            return False
        if block.computed_hash() != block.hash:
            return False
        ids = [tx.tx_id for tx in block.txs]
        if len(set(ids)) != len(ids) or any(i in self.ledger.receipts for i in ids):
            return False
        return True

    def on_preprepare(self, src, msg: PrePrepare) -> None:
        if src != self.proposer(self.height, self.round) or self.proposal is not None:
            return
        block = msg.block
        if not self.valid_block(block):
            return
        if self.locked is not None and block.hash != self.locked.hash:
            return
        self.proposal = block
        if block.hash in self.executed:
            cost = 0.0
        else:
            cost = self.cost.block_cost(block.txs, self.registry_size())
        done = self.run_job(cost, "validated", (self.height, self.round, block.hash))
        # local execution time does not count against the round
        self.arm_round_timer(done - self.sim.now + self.round_timeout(self.round))

    # -- voting -----------------------------------------------------------------

    def on_validated(self, height, round_, digest) -> None:
        if (height, round_) != (self.height, self.round):
            return
        if self.proposal is None or self.proposal.hash != digest or self.phase is not Phase.AWAITING_PROPOSAL:
            return
        self.executed.add(digest)
        self.phase = Phase.PREPREPARED
        self.prepares[(round_, digest)].add(self.node_id)
        self.broadcast(Prepare(height, round_, digest))
        self.check_prepared()
        self.check_committed()

    def check_prepared(self) -> None:
        if self.phase is not Phase.PREPREPARED:
            return
        digest = self.proposal.hash
        if len(self.prepares[(self.round, digest)]) < self.quorum:
            return
        self.phase = Phase.PREPARED
        self.locked, self.locked_round = self.proposal, self.round
        self.commits[(self.round, digest)].add(self.node_id)
        self.broadcast(Commit(self.height, self.round, digest))
        self.check_committed()

    def check_committed(self) -> None:
        if self.phase not in (Phase.PREPREPARED, Phase.PREPARED):
            return
        signers = self.commits[(self.round, self.proposal.hash)]
        if len(signers) >= self.quorum:
            self.phase = Phase.COMMITTED
            self.finalize(self.proposal, frozenset(signers))

    def finalize(self, block: Block, signers: frozenset) -> None:
        assert len(signers) >= self.quorum
        self.seals[block.height] = signers
        self.commit(block)
        for tx in block.txs:
            self.pool.pop(tx.tx_id, None)
        self.start_height()

    # -- round changes ----------------------------------------------------------

    def move_to_round(self, round_: int) -> None:
        self.round = round_
        self.phase = Phase.AWAITING_PROPOSAL
        self.proposal = None
        self.observer.on_round_change(self.node_id, self.height, round_, self.sim.now)
        self.round_changes[round_][self.node_id] = (self.locked_round, self.locked)
        self.broadcast(RoundChange(self.height, round_, self.locked_round, self.locked))
        self.arm_round_timer(self.round_timeout(round_))
        self.replay_future()
        self.maybe_propose_after_round_change()

    def on_round_change(self, src, msg: RoundChange) -> None:
        self.round_changes[msg.round][src] = (msg.locked_round, msg.locked_block)
        if msg.round > self.round:
            # f + 1 validators ahead of us include an honest one: catch up
            ahead = {}
            for r, senders in self.round_changes.items():
                if r > self.round:
                    for s in senders:
                        ahead[s] = max(ahead.get(s, r), r)
            if len(ahead) >= self.f + 1:
                self.move_to_round(min(ahead.values()))
                return
        self.maybe_propose_after_round_change()

    def maybe_propose_after_round_change(self) -> None:
        if self.round > 0 and len(self.round_changes[self.round]) >= self.quorum:
            self.propose()

    # -- buffering and catch-up -------------------------------------------------

    def buffer(self, src, msg) -> None:
        if msg.height > self.height + FUTURE_HEIGHT_WINDOW:
            self.request_sync(src)
            return
        if msg.height > self.height + 1:
            self.request_sync(src)
        self.future.append((src, msg))

    def replay_future(self) -> None:
        if not self.future:
            return
        waiting, self.future = self.future, []
        for src, msg in waiting:
            self.on_message(src, msg)

    def request_sync(self, src) -> None:
        if self.sim.now - self._last_sync_request >= 500.0:
            self._last_sync_request = self.sim.now
            self.send(src, SyncRequest(self.height))

    def send_sync(self, dst, from_height: int) -> None:
        items = tuple((self.ledger.blocks[h], self.seals[h])
                      for h in range(max(from_height, 1), min(self.ledger.height, from_height + SYNC_BATCH) + 1)
                      if h in self.seals)
        if items:
            self.send(dst, SyncReply(items))

    def on_sync_reply(self, msg: SyncReply) -> None:
        advanced = False
        for block, signers in msg.items:
            if block.height != self.ledger.height + 1 or len(signers) < self.quorum:
                continue
            try:
                self.seals[block.height] = frozenset(signers)
                self.commit(block)
            except BrokenChain:
                del self.seals[block.height]
                break
            for tx in block.txs:
                self.pool.pop(tx.tx_id, None)
            advanced = True
        if advanced:
            self.start_height()


# -- byzantine behaviours ---------------------------------------------------------
# Each policy rewrites (or drops) the messages a faulty validator sends.

def silence(msg, src, dst, rng):
    return None


def _twist(digest: bytes) -> bytes:
    return hashlib.sha256(b"equivocation" + digest).digest()


def equivocate(msg, src, dst, rng):
    """Tell odd-numbered peers something different from everyone else."""
    if dst % 2 == 0:
        return msg
    if isinstance(msg, PrePrepare):
        b = msg.block
        return replace(msg, block=make_block(b.height, b.prev_hash, b.proposer, b.timestamp + 1, b.txs))
    if isinstance(msg, (Prepare, Commit)):
        return replace(msg, digest=_twist(msg.digest))
    return msg


def invalid_proposal(msg, src, dst, rng):
    """Proposals point at a parent that does not exist."""
    if isinstance(msg, PrePrepare):
        b = msg.block
        return replace(msg, block=make_block(b.height, _twist(b.prev_hash), b.proposer, b.timestamp, b.txs))
    return msg


BYZANTINE_POLICIES = {
    "silence": silence,
    "equivocate": equivocate,
    "invalid_proposal": invalid_proposal,
}
