"""Transactions, blocks and the per-node hash-linked ledger."""
from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from . import contract
from .contract import ProviderSpec, ResourceRequest, Sla, WorldState

ZERO_HASH = bytes(32)
HASH_ALGORITHM = "sha256"


class BrokenChain(Exception):
    pass


# -- transactions -------------------------------------------------------------

@dataclass(frozen=True)
class AddNetworkProvider:
    provider: ProviderSpec
    function = "addNetworkProvider"


@dataclass(frozen=True)
class RequestResources:
    request: ResourceRequest
    payment: int
    function = "requestResources"


@dataclass(frozen=True)
class ReturnResources:
    lease_id: int
    function = "returnResources"


Call = Union[AddNetworkProvider, RequestResources, ReturnResources]
FUNCTIONS = (AddNetworkProvider.function, RequestResources.function, ReturnResources.function)


@dataclass(frozen=True)
class Transaction:
    tx_id: int
    sender: str
    call: Call
    submit_time: float  # ms

    @property
    def function(self) -> str:
        return self.call.function


class Status(str, enum.Enum):
    SUCCESS = "success"
    REVERTED = "reverted"
    TIMED_OUT = "timed_out"


@dataclass(frozen=True)
class Receipt:
    tx_id: int
    status: Status
    reason: Optional[str] = None
    confirm_time: Optional[float] = None  # ms
    block_height: Optional[int] = None


def apply_transaction(state: WorldState, tx: Transaction, now: int) -> tuple[Status, Optional[str]]:
    call = tx.call
    try:
        if isinstance(call, AddNetworkProvider):
            contract.add_network_provider(state, tx.sender, call.provider)
        elif isinstance(call, RequestResources):
            contract.request_resources(state, tx.sender, call.request, call.payment, now)
        elif isinstance(call, ReturnResources):
            contract.return_resources(state, tx.sender, call.lease_id, now)
        else:
            return Status.REVERTED, "UnknownCall"
    except contract.ContractError as exc:
        return Status.REVERTED, exc.reason
    return Status.SUCCESS, None


# -- canonical encoding -------------------------------------------------------
# Every field is written as a 4-byte big-endian length followed by its bytes,
# in declaration order. Collections are prefixed by their element count and
# sorted first when they are sets.

def _f(data: bytes) -> bytes:
    return len(data).to_bytes(4, "big") + data


def _int(v: int) -> bytes:
    return _f(v.to_bytes((v.bit_length() + 8) // 8 or 1, "big", signed=True))


def _str(v: str) -> bytes:
    return _f(v.encode("utf-8"))


def _frac(v: Fraction) -> bytes:
    return _int(v.numerator) + _int(v.denominator)


def _sla(s: Sla) -> bytes:
    return _f(_int(s.max_latency_ms) + _int(s.min_throughput_mbps) + _frac(s.max_packet_loss_pct))


def _provider(p: ProviderSpec) -> bytes:
    slas = sorted(p.slas)
    vnfs = sorted(p.vnf_images)
    return _f(
        _str(p.name) + _int(p.cpu) + _int(p.ram) + _int(p.storage) + _int(p.cost) + _str(p.domain)
        + _int(len(slas)) + b"".join(_sla(s) for s in slas)
        + _int(len(vnfs)) + b"".join(_str(v) for v in vnfs)
        + _str(p.address)
    )


def _request(r: ResourceRequest) -> bytes:
    return _f(_int(r.cpu) + _int(r.ram) + _int(r.storage) + _str(r.domain) + _sla(r.sla)
              + _str(r.vnf_image) + _int(r.lend_time))


def encode_call(call: Call) -> bytes:
    if isinstance(call, AddNetworkProvider):
        return _str(call.function) + _provider(call.provider)
    if isinstance(call, RequestResources):
        return _str(call.function) + _request(call.request) + _int(call.payment)
    if isinstance(call, ReturnResources):
        return _str(call.function) + _int(call.lease_id)
    raise TypeError(f"not a contract call: {call!r}")


def encode_tx(tx: Transaction) -> bytes:
    return _f(_int(tx.tx_id) + _str(tx.sender) + _f(encode_call(tx.call)) + _f(struct.pack(">d", tx.submit_time)))


def block_hash(height: int, prev_hash: bytes, proposer: int, timestamp: int, txs) -> bytes:
    body = (_int(height) + _f(prev_hash) + _int(proposer) + _int(timestamp)
            + _int(len(txs)) + b"".join(encode_tx(tx) for tx in txs))
    return hashlib.new(HASH_ALGORITHM, body).digest()


# -- blocks -------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    hash: bytes
    proposer: int
    timestamp: int  # ms
    txs: tuple = ()

    def computed_hash(self) -> bytes:
        return block_hash(self.height, self.prev_hash, self.proposer, self.timestamp, self.txs)

    def __repr__(self):
        return f"Block(h={self.height}, {self.hash.hex()[:10]}, txs={len(self.txs)})"


def make_block(height: int, prev_hash: bytes, proposer: int, timestamp: int, txs=()) -> Block:
    txs = tuple(txs)
    return Block(height, prev_hash, block_hash(height, prev_hash, proposer, timestamp, txs), proposer, timestamp, txs)


GENESIS = make_block(0, ZERO_HASH, -1, 0)


def state_digest(state: WorldState) -> str:
    """Stable digest of a world state, for byte-level replica comparison."""
    snap = contract.state_snapshot(state)
    return hashlib.sha256(repr(snap).encode()).hexdigest()


@dataclass
class Ledger:
    state: WorldState
    blocks: list = field(default_factory=lambda: [GENESIS])
    receipts: dict = field(default_factory=dict)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.blocks[-1].height

    def append_block(self, block: Block) -> list[Receipt]:
        """Validate the link, execute every transaction and record receipts.

        Reverted transactions stay in the block; a transaction id seen in an
        earlier block is recorded as a ``DuplicateTx`` revert and its first
        receipt is kept.
        """
        tip = self.tip
        if block.height != tip.height + 1 or block.prev_hash != tip.hash:
            raise BrokenChain(f"block {block.height} does not extend tip {tip.height}")
        if block.computed_hash() != block.hash:
            raise BrokenChain(f"block {block.height} hash does not match its contents")
        receipts = []
        for tx in block.txs:
            if tx.tx_id in self.receipts:
                receipts.append(Receipt(tx.tx_id, Status.REVERTED, "DuplicateTx", block.timestamp, block.height))
                continue
            status, reason = apply_transaction(self.state, tx, block.timestamp)
            receipt = Receipt(tx.tx_id, status, reason, block.timestamp, block.height)
            self.receipts[tx.tx_id] = receipt
            receipts.append(receipt)
        self.blocks.append(block)
        return receipts


def verify_chain(blocks) -> bool:
    """True iff heights, hash links and every recomputed block hash check out."""
    if isinstance(blocks, Ledger):
        blocks = blocks.blocks
    if not blocks or blocks[0].height != 0 or blocks[0].prev_hash != ZERO_HASH:
        return False
    for i, block in enumerate(blocks):
        if block.height != i or block.computed_hash() != block.hash:
            return False
        if i and block.prev_hash != blocks[i - 1].hash:
            return False
    return True


def replay(genesis: WorldState, blocks) -> WorldState:
    ledger = Ledger(genesis.copy())
    for block in blocks[1:]:
        ledger.append_block(block)
    return ledger.state


# -- JSON form ----------------------------------------------------------------

def call_to_dict(call: Call) -> dict:
    if isinstance(call, AddNetworkProvider):
        return {"function": call.function, "provider": contract.provider_spec_to_dict(call.provider)}
    if isinstance(call, RequestResources):
        return {"function": call.function, "request": contract.request_to_dict(call.request),
                "payment": call.payment}
    return {"function": call.function, "lease_id": call.lease_id}


def call_from_dict(d: dict) -> Call:
    fn = d["function"]
    if fn == AddNetworkProvider.function:
        return AddNetworkProvider(contract.provider_spec_from_dict(d["provider"]))
    if fn == RequestResources.function:
        return RequestResources(contract.request_from_dict(d["request"]), d["payment"])
    if fn == ReturnResources.function:
        return ReturnResources(d["lease_id"])
    raise ValueError(f"unknown function {fn!r}")


def tx_to_dict(tx: Transaction) -> dict:
    return {"tx_id": tx.tx_id, "sender": tx.sender, "call": call_to_dict(tx.call), "submit_time": tx.submit_time}


def tx_from_dict(d: dict) -> Transaction:
    return Transaction(d["tx_id"], d["sender"], call_from_dict(d["call"]), float(d["submit_time"]))


def block_to_dict(b: Block) -> dict:
    return {
        "height": b.height,
        "prev_hash": b.prev_hash.hex(),
        "hash": b.hash.hex(),
        "proposer": b.proposer,
        "timestamp": b.timestamp,
        "txs": [tx_to_dict(tx) for tx in b.txs],
    }


def block_from_dict(d: dict) -> Block:
    return Block(d["height"], bytes.fromhex(d["prev_hash"]), bytes.fromhex(d["hash"]), d["proposer"],
                 d["timestamp"], tuple(tx_from_dict(t) for t in d["txs"]))


def dump_ledger(ledger: Ledger, path, node_id=None) -> None:
    doc = {
        "format": "npmarket-ledger/1",
        "hash": HASH_ALGORITHM,
        "node": node_id,
        "blocks": [block_to_dict(b) for b in ledger.blocks],
        "receipts": [
            {"tx_id": r.tx_id, "status": r.status.value, "reason": r.reason,
             "confirm_time": r.confirm_time, "block_height": r.block_height}
            for r in sorted(ledger.receipts.values(), key=lambda r: r.tx_id)
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_blocks(path) -> list[Block]:
    with open(path) as fh:
        doc = json.load(fh)
    return [block_from_dict(b) for b in doc["blocks"]]
