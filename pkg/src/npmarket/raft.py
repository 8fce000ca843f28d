"""Raft ordering for the block ledger.

Leader election and log replication follow the usual Raft rules. Blocks are
cut on demand: the leader only builds a block when it has pending
transactions, and heartbeats carry no blocks. A freshly elected leader
appends a no-op log entry (not a block) so entries from earlier terms can be
committed without minting an empty block.
"""
from __future__ import annotations

import enum
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

from .chain import GENESIS, Block, make_block
from .replica import Replica

MAX_ENTRIES_PER_MESSAGE = 64


class Role(enum.Enum):
    FOLLOWER = "follower"
    CANDIDATE = "candidate"
    LEADER = "leader"


@dataclass(frozen=True)
class RaftConfig:
    election_timeout_ms: tuple = (150.0, 300.0)
    heartbeat_ms: float = 50.0
    max_block_txs: int = 10
    forward_retry_ms: float = 1000.0


@dataclass(frozen=True)
class LogEntry:
    term: int
    block: Optional[Block]  # None for the leader's no-op entry


@dataclass(frozen=True)
class RequestVote:
    term: int
    candidate: int
    last_log_index: int
    last_log_term: int

    def brief(self):
        return f"term={self.term}"


@dataclass(frozen=True)
class VoteReply:
    term: int
    granted: bool

    def brief(self):
        return f"term={self.term} granted={self.granted}"


@dataclass(frozen=True)
class AppendEntries:
    term: int
    leader: int
    prev_index: int
    prev_term: int
    entries: tuple
    leader_commit: int

    def brief(self):
        return f"term={self.term} prev={self.prev_index} n={len(self.entries)} commit={self.leader_commit}"


@dataclass(frozen=True)
class AppendReply:
    term: int
    success: bool
    match_index: int

    def brief(self):
        return f"term={self.term} ok={self.success} match={self.match_index}"


@dataclass(frozen=True)
class ForwardTx:
    txs: tuple

    def brief(self):
        return f"n={len(self.txs)}"


class RaftNode(Replica):
    def __init__(self, node_id, sim, genesis, cost, observer=None, config: RaftConfig = RaftConfig(),
                 block_gas_limit_ms: float = 4000.0):
        super().__init__(node_id, sim, genesis, cost, observer, config.max_block_txs, block_gas_limit_ms)
        self.config = config
        self.role = Role.FOLLOWER
        self.current_term = 0
        self.voted_for: Optional[int] = None
        self.log: list[LogEntry] = [LogEntry(0, GENESIS)]
        self.commit_index = 0
        self.last_applied = 0
        self.leader_id: Optional[int] = None
        self.votes: set[int] = set()
        self.next_index: dict[int, int] = {}
        self.match_index: dict[int, int] = {}
        self.pending: OrderedDict = OrderedDict()  # leader's mempool
        self.local: OrderedDict = OrderedDict()  # txs submitted here, until committed
        self.in_log: set[int] = set()
        self.minted: set[bytes] = set()
        self.minting = False
        self.applying = False
        self._election_token = 0

    def start(self) -> None:
        self.reset_election_timer()
        self.set_timer(self.config.forward_retry_ms, "reforward")

    # -- helpers --------------------------------------------------------------

    @property
    def last_index(self) -> int:
        return len(self.log) - 1

    @property
    def majority(self) -> int:
        return self.n // 2 + 1

    def reset_election_timer(self) -> None:
        self._election_token += 1
        lo, hi = self.config.election_timeout_ms
        self.set_timer(self.sim.rng.uniform(lo, hi), "election", self._election_token)

    def log_tip_block(self) -> Block:
        for entry in reversed(self.log):
            if entry.block is not None:
                return entry.block
        return GENESIS

    def become_follower(self, term: int, leader: Optional[int] = None) -> None:
        if term > self.current_term:
            self.current_term = term
            self.voted_for = None
        was_leader = self.role is Role.LEADER
        self.role = Role.FOLLOWER
        self.votes = set()
        if was_leader:
            self.pending.clear()
            self.reset_election_timer()
        self.set_leader(leader)

    def set_leader(self, leader: Optional[int]) -> None:
        if leader == self.leader_id:
            return
        self.leader_id = leader
        if leader is not None and leader != self.node_id and self.local:
            self.send(leader, ForwardTx(tuple(self.local.values())))

    # -- events ---------------------------------------------------------------

    def on_tx(self, tx) -> None:
        if tx.tx_id in self.ledger.receipts:
            return
        self.local[tx.tx_id] = tx
        if self.role is Role.LEADER:
            self.accept_txs([tx])
        elif self.leader_id is not None:
            self.send(self.leader_id, ForwardTx((tx,)))
        # otherwise it is forwarded once a leader becomes known

    def on_timer(self, name, data) -> None:
        if name == "election":
            if data == self._election_token:
                self.on_election_timeout()
        elif name == "heartbeat":
            if self.role is Role.LEADER and data == self.current_term:
                self.broadcast_append()
                self.set_timer(self.config.heartbeat_ms, "heartbeat", self.current_term)
        elif name == "reforward":
            self.reforward()
            self.set_timer(self.config.forward_retry_ms, "reforward")
        elif name == "mint_done":
            self.on_mint_done(*data)
        elif name == "apply_done":
            self.on_apply_done(data)

    def on_message(self, src, msg) -> None:
        if isinstance(msg, AppendEntries):
            self.on_append_entries(src, msg)
        elif isinstance(msg, AppendReply):
            self.on_append_reply(src, msg)
        elif isinstance(msg, RequestVote):
            self.on_request_vote(src, msg)
        elif isinstance(msg, VoteReply):
            self.on_vote_reply(src, msg)
        elif isinstance(msg, ForwardTx):
            if self.role is Role.LEADER:
                self.accept_txs(msg.txs)
            elif self.leader_id is not None and self.leader_id != src:
                self.send(self.leader_id, msg)

    def reforward(self) -> None:
        """Resend local transactions still unconfirmed after a retry interval."""
        if self.role is Role.LEADER or self.leader_id is None:
            return
        cutoff = self.sim.now - self.config.forward_retry_ms
        stale = tuple(tx for tx in self.local.values() if tx.submit_time <= cutoff)
        if stale:
            self.send(self.leader_id, ForwardTx(stale))

    def on_recover(self) -> None:
        super().on_recover()
        self.set_timer(self.config.forward_retry_ms, "reforward")
        self.role = Role.FOLLOWER
        self.leader_id = None
        self.votes = set()
        self.pending.clear()
        self.minting = False
        self.applying = False
        self.reset_election_timer()
        self.maybe_apply()

    # -- election -------------------------------------------------------------

    def on_election_timeout(self) -> None:
        if self.role is Role.LEADER:
            return
        self.current_term += 1
        self.role = Role.CANDIDATE
        self.voted_for = self.node_id
        self.votes = {self.node_id}
        self.leader_id = None
        self.reset_election_timer()
        msg = RequestVote(self.current_term, self.node_id, self.last_index, self.log[-1].term)
        for peer in self.peers:
            self.send(peer, msg)
        self.check_election()

    def on_request_vote(self, src, msg: RequestVote) -> None:
        if msg.term > self.current_term:
            self.become_follower(msg.term)
        up_to_date = (msg.last_log_term, msg.last_log_index) >= (self.log[-1].term, self.last_index)
        granted = (msg.term == self.current_term and self.voted_for in (None, msg.candidate) and up_to_date)
        if granted:
            self.voted_for = msg.candidate
            self.reset_election_timer()
        self.send(src, VoteReply(self.current_term, granted))

    def on_vote_reply(self, src, msg: VoteReply) -> None:
        if msg.term > self.current_term:
            self.become_follower(msg.term)
            return
        if self.role is Role.CANDIDATE and msg.term == self.current_term and msg.granted:
            self.votes.add(src)
            self.check_election()

    def check_election(self) -> None:
        if self.role is Role.CANDIDATE and len(self.votes) >= self.majority:
            self.become_leader()

    def become_leader(self) -> None:
        self.role = Role.LEADER
        self.leader_id = self.node_id
        self.log.append(LogEntry(self.current_term, None))
        self.next_index = {p: self.last_index for p in self.peers}
        self.match_index = {p: 0 for p in self.peers}
        self.pending = OrderedDict()
        self.observer.on_leader(self.node_id, self.current_term, self.sim.now)
        self.broadcast_append()
        self.set_timer(self.config.heartbeat_ms, "heartbeat", self.current_term)
        self.accept_txs(self.local.values())
        self.advance_commit()

    # -- block production (leader) ---------------------------------------------

    def accept_txs(self, txs) -> None:
        for tx in txs:
            if tx.tx_id in self.ledger.receipts or tx.tx_id in self.in_log or tx.tx_id in self.pending:
                continue
            self.pending[tx.tx_id] = tx
        self.maybe_mint()

    def speculative_registry_size(self) -> int:
        size = self.registry_size()
        for entry in self.log[self.last_applied + 1:]:
            if entry.block is not None:
                size += sum(1 for tx in entry.block.txs if tx.function == "addNetworkProvider")
        return size

    def maybe_mint(self) -> None:
        """Cut a block from pending transactions. Never produces an empty block."""
        if self.role is not Role.LEADER or self.minting or self.halted or not self.pending:
            return
        size = self.speculative_registry_size()
        txs = self.select_txs(self.pending, skip=self.in_log, registry_size=size)
        if not txs:
            return
        for tx in txs:
            del self.pending[tx.tx_id]
        self.minting = True
        self.run_job(self.cost.block_cost(txs, size), "mint_done", (self.current_term, tuple(txs)))

    def on_mint_done(self, term, txs) -> None:
        self.minting = False
        if self.role is not Role.LEADER or term != self.current_term:
            return
        parent = self.log_tip_block()
        block = make_block(parent.height + 1, parent.hash, self.node_id, int(self.sim.now), txs)
        self.log.append(LogEntry(self.current_term, block))
        self.in_log.update(tx.tx_id for tx in txs)
        self.minted.add(block.hash)
        self.broadcast_append()
        self.advance_commit()
        self.maybe_mint()

    # -- replication ------------------------------------------------------------

    def append_for(self, peer: int) -> AppendEntries:
        nxt = self.next_index[peer]
        prev = nxt - 1
        entries = tuple(self.log[nxt:nxt + MAX_ENTRIES_PER_MESSAGE])
        return AppendEntries(self.current_term, self.node_id, prev, self.log[prev].term, entries, self.commit_index)

    def broadcast_append(self) -> None:
        for peer in self.peers:
            self.send(peer, self.append_for(peer))

    def on_append_entries(self, src, msg: AppendEntries) -> None:
        if msg.term < self.current_term:
            self.send(src, AppendReply(self.current_term, False, 0))
            return
        if msg.term > self.current_term or self.role is not Role.FOLLOWER:
            self.become_follower(msg.term, msg.leader)
        self.set_leader(msg.leader)
        self.reset_election_timer()

        if msg.prev_index > self.last_index or self.log[msg.prev_index].term != msg.prev_term:
            hint = min(msg.prev_index - 1, self.last_index)
            self.send(src, AppendReply(self.current_term, False, max(hint, 0)))
            return
        index = msg.prev_index
        for entry in msg.entries:
            index += 1
            if index <= self.last_index:
                if self.log[index].term == entry.term:
                    continue
                assert index > self.commit_index, "attempt to truncate a committed entry"
                del self.log[index:]
                self.in_log = {tx.tx_id for e in self.log if e.block for tx in e.block.txs}
            self.log.append(entry)
            if entry.block is not None:
                self.in_log.update(tx.tx_id for tx in entry.block.txs)
        match = msg.prev_index + len(msg.entries)
        if msg.leader_commit > self.commit_index:
            self.commit_index = min(msg.leader_commit, match)
            self.maybe_apply()
        self.send(src, AppendReply(self.current_term, True, match))

    def on_append_reply(self, src, msg: AppendReply) -> None:
        if msg.term > self.current_term:
            self.become_follower(msg.term)
            return
        if self.role is not Role.LEADER or msg.term != self.current_term:
            return
        if msg.success:
            if msg.match_index > self.match_index[src]:
                self.match_index[src] = msg.match_index
            self.next_index[src] = max(self.next_index[src], msg.match_index + 1)
            self.advance_commit()
            if self.next_index[src] <= self.last_index:
                self.send(src, self.append_for(src))
        else:
            self.next_index[src] = max(1, min(self.next_index[src] - 1, msg.match_index + 1))
            self.send(src, self.append_for(src))

    def advance_commit(self) -> None:
        """Commit the highest current-term index replicated on a majority."""
        for idx in range(self.last_index, self.commit_index, -1):
            if self.log[idx].term != self.current_term:
                break
            replicas = 1 + sum(1 for m in self.match_index.values() if m >= idx)
            if replicas >= self.majority:
                self.commit_index = idx
                self.broadcast_append()  # tell followers right away
                self.maybe_apply()
                break

    # -- applying committed blocks ----------------------------------------------

    def maybe_apply(self) -> None:
        while not self.applying and self.last_applied < self.commit_index:
            idx = self.last_applied + 1
            block = self.log[idx].block
            if block is None:
                self.last_applied = idx
                continue
            # blocks this node minted were already executed while building them
            if block.hash in self.minted:
                cost = 0.0
            else:
                cost = self.cost.block_cost(block.txs, self.registry_size())
            self.applying = True
            self.run_job(cost, "apply_done", idx)

    def on_apply_done(self, idx) -> None:
        if not self.applying or idx != self.last_applied + 1:
            return
        block = self.log[idx].block
        self.commit(block)
        self.last_applied = idx
        for tx in block.txs:
            self.local.pop(tx.tx_id, None)
            self.pending.pop(tx.tx_id, None)
        self.applying = False
        self.maybe_apply()
