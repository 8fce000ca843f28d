import json
import random

import pytest

from npmarket.chain import (GENESIS, BrokenChain, Ledger, Status, Transaction, block_from_dict,
                            block_to_dict, dump_ledger, encode_tx, load_blocks, make_block, replay, state_digest,
                            tx_from_dict, tx_to_dict, verify_chain)
from npmarket.contract import WorldState, state_snapshot

from simhelp import request_tx
from tamper import sample_chain, tamper


def test_sample_chain_verifies():
    ledger = sample_chain()
    assert ledger.height > 5
    assert verify_chain(ledger)


def test_tamper_fuzz_detects_every_change():
    ledger = sample_chain(1)
    rng = random.Random(7)
    for _ in range(1000):
        blocks, what = tamper(ledger.blocks, rng)
        assert not verify_chain(blocks), what


def test_rehashed_tamper_breaks_the_next_link():
    ledger = sample_chain(2)
    b = ledger.blocks[3]
    forged = make_block(b.height, b.prev_hash, b.proposer, b.timestamp + 1, b.txs)
    blocks = list(ledger.blocks)
    blocks[3] = forged
    assert not verify_chain(blocks)


def test_block_hash_is_deterministic_and_content_bound():
    tx = request_tx(1, 0, 10.0)
    a = make_block(1, GENESIS.hash, 0, 100, [tx])
    b = make_block(1, GENESIS.hash, 0, 100, [tx])
    assert a.hash == b.hash
    assert make_block(1, GENESIS.hash, 0, 101, [tx]).hash != a.hash
    assert make_block(1, GENESIS.hash, 1, 100, [tx]).hash != a.hash


def test_encoding_is_unambiguous():
    # moving a character between adjacent string fields must change the bytes
    a = request_tx(1, 0, 0.0)
    b = Transaction(1, "np", a.call, 0.0)
    c = Transaction(1, "np0", a.call, 0.0)
    assert len({encode_tx(a), encode_tx(b), encode_tx(c)}) == 2
    assert encode_tx(a) == encode_tx(c)
    assert encode_tx(request_tx(1, 0, 0.0)) != encode_tx(request_tx(10, 0, 0.0))


def test_append_rejects_bad_links():
    ledger = Ledger(WorldState("admin"))
    with pytest.raises(BrokenChain):
        ledger.append_block(make_block(2, GENESIS.hash, 0, 0))
    with pytest.raises(BrokenChain):
        ledger.append_block(make_block(1, b"\x01" * 32, 0, 0))
    good = make_block(1, GENESIS.hash, 0, 0)
    forged = good.__class__(1, GENESIS.hash, good.hash, 0, 5, ())
    with pytest.raises(BrokenChain):
        ledger.append_block(forged)
    ledger.append_block(good)
    assert ledger.height == 1


def test_reverted_transactions_stay_in_the_block():
    ledger = Ledger(WorldState("admin", accounts={"np0": 10_000}))
    tx = request_tx(1, 0, 0.0)  # nobody is registered: NoProviderFound
    receipts = ledger.append_block(make_block(1, GENESIS.hash, 0, 10, [tx]))
    assert receipts[0].status is Status.REVERTED and receipts[0].reason == "NoProviderFound"
    assert ledger.tip.txs == (tx,)


def test_duplicate_transaction_is_reverted():
    ledger = Ledger(WorldState("admin", accounts={"np0": 10_000}))
    tx = request_tx(1, 0, 0.0)
    ledger.append_block(make_block(1, GENESIS.hash, 0, 10, [tx]))
    receipts = ledger.append_block(make_block(2, ledger.tip.hash, 0, 20, [tx]))
    assert receipts[0].reason == "DuplicateTx"
    assert ledger.receipts[1].block_height == 1


def test_replay_reproduces_state():
    ledger = sample_chain(3)
    from npmarket.bench.workload import WorkloadSpec, generate
    from npmarket.contract import genesis_state

    mix = {"addNetworkProvider": 0.3, "requestResources": 0.4, "returnResources": 0.3}
    genesis = genesis_state(generate(WorkloadSpec(itr=10, duration_s=4, mix=mix, warmup_s=0), 3).genesis)
    state = replay(genesis, ledger.blocks)
    assert state_snapshot(state) == state_snapshot(ledger.state)
    assert state_digest(state) == state_digest(ledger.state)


def test_json_round_trip(tmp_path):
    ledger = sample_chain(4)
    for b in ledger.blocks:
        assert block_from_dict(json.loads(json.dumps(block_to_dict(b)))) == b
        for tx in b.txs:
            assert tx_from_dict(tx_to_dict(tx)) == tx
    path = tmp_path / "ledger.json"
    dump_ledger(ledger, path, node_id=2)
    assert load_blocks(path) == ledger.blocks
    assert verify_chain(load_blocks(path))


def test_verify_rejects_empty_and_bad_genesis():
    assert not verify_chain([])
    assert not verify_chain([make_block(0, b"\x01" * 32, -1, 0)])
