import pytest

from npmarket.chain import make_block
from npmarket.ibft import (BYZANTINE_POLICIES, Commit, IbftConfig, Phase, PrePrepare, Prepare, RoundChange, max_faulty,
                           quorum_size)
from npmarket.netsim import Byzantine, Crash, Recover

from simhelp import committed_ids, inject, network, request_tx


@pytest.mark.parametrize("n", range(1, 60))
def test_quorum_arithmetic(n):
    f, q = max_faulty(n), quorum_size(n)
    assert n >= 3 * f + 1
    assert q >= 2 * f + 1
    assert q <= n - f  # reachable with f silent validators
    assert 2 * q - n >= f + 1  # two quorums share an honest validator
    if n == 3 * f + 1:
        assert q == 2 * f + 1


def test_five_validators_tolerate_one_fault():
    assert max_faulty(5) == 1
    assert quorum_size(5) == 4


def test_all_honest_finalize_in_round_zero():
    sim, nodes, watcher = network("ibft", seed=1)
    txs = inject(sim, 10, start=200, spacing=100)
    sim.run_until(10000)
    assert watcher.round_changes == []
    assert watcher.conflicts() == []
    for node in nodes:
        assert committed_ids(node) == {tx.tx_id for tx in txs}
        assert node.ledger.height > 3


def test_empty_blocks_each_period():
    sim, nodes, watcher = network("ibft", seed=2)
    sim.run_until(10500)
    heights = {n.ledger.height for n in nodes}
    assert min(heights) >= 8
    assert watcher.empty > 0


def _stalled_node(seed=3):
    """Node 2 of a network whose timers and messages we drive by hand."""
    sim, nodes, watcher = network("ibft", seed)
    for i in range(5):
        if i != 2:
            sim.inject_fault(Crash(i, 0))
    sim.run_until(0)
    return sim, nodes[2]


def _block(node, proposer, txs=(), ts=0):
    tip = node.ledger.tip
    return make_block(tip.height + 1, tip.hash, proposer, ts, txs)


def test_non_proposer_preprepare_is_ignored():
    sim, node = _stalled_node()
    assert node.proposer(1, 0) == 1
    node.on_message(3, PrePrepare(1, 0, _block(node, 3)))
    sim.run_until(100)
    assert node.proposal is None and node.phase is Phase.AWAITING_PROPOSAL


def test_finalization_needs_a_full_quorum_of_commits():
    sim, node = _stalled_node()
    block = _block(node, 1, [request_tx(1, 1, 0)])
    node.on_message(1, PrePrepare(1, 0, block))
    sim.run_until(100)
    assert node.phase is Phase.PREPREPARED
    for src in (0, 1, 3):
        node.on_message(src, Prepare(1, 0, block.hash))
    assert node.phase is Phase.PREPARED and node.locked == block
    # own commit plus two others: 3 = 2F+1 signers, still one short of the quorum
    node.on_message(0, Commit(1, 0, block.hash))
    node.on_message(1, Commit(1, 0, block.hash))
    assert node.ledger.height == 0
    # repeated votes from one validator count once
    node.on_message(1, Commit(1, 0, block.hash))
    assert node.ledger.height == 0
    node.on_message(3, Commit(1, 0, block.hash))
    assert node.ledger.height == 1 and node.ledger.tip == block
    assert len(node.seals[1]) >= quorum_size(5)


def test_commits_for_another_digest_do_not_count():
    sim, node = _stalled_node()
    block = _block(node, 1)
    node.on_message(1, PrePrepare(1, 0, block))
    sim.run_until(100)
    for src in (0, 1, 3, 4):
        node.on_message(src, Commit(1, 0, b"\x01" * 32))
    assert node.ledger.height == 0


def test_locked_node_only_accepts_its_block():
    sim, node = _stalled_node()
    block = _block(node, 1, [request_tx(1, 1, 0)])
    node.on_message(1, PrePrepare(1, 0, block))
    sim.run_until(100)
    for src in (0, 1, 3):
        node.on_message(src, Prepare(1, 0, block.hash))
    assert node.locked == block
    sim.run_until(node.config.block_period_ms + node.config.round_timeout_ms + 200)
    assert node.round == 1 and node.locked == block
    # round 1 proposer is node 2 itself: it must re-propose the locked block
    assert node.proposer(1, 1) == 2
    node.on_message(0, RoundChange(1, 1, -1, None))
    node.on_message(3, RoundChange(1, 1, -1, None))
    node.on_message(4, RoundChange(1, 1, -1, None))
    sim.run_until(sim.now + 100)
    assert node.proposal == block


def test_locked_node_rejects_a_different_block_next_round():
    sim, node = _stalled_node(seed=4)
    block = _block(node, 1, [request_tx(1, 1, 0)])
    node.on_message(1, PrePrepare(1, 0, block))
    sim.run_until(100)
    for src in (0, 1, 3):
        node.on_message(src, Prepare(1, 0, block.hash))
    node.move_to_round(2)  # proposer of (1, 2) is node 3
    other = _block(node, 3, [request_tx(2, 3, 0)])
    node.on_message(3, PrePrepare(1, 2, other))
    sim.run_until(sim.now + 100)
    assert node.proposal is None
    node.on_message(3, PrePrepare(1, 2, block))
    sim.run_until(sim.now + 100)
    assert node.proposal == block and node.phase is Phase.PREPREPARED


def test_proposer_crash_moves_to_round_one():
    sim, nodes, watcher = network("ibft", seed=5)
    assert nodes[0].proposer(1, 0) == 1
    sim.inject_fault(Crash(1, 0))
    txs = inject(sim, 4, start=100, spacing=100, n=1)  # all to node 0
    sim.run_until(20000)
    first = nodes[0].ledger.blocks[1]
    assert first.proposer == 2
    assert {(h, r) for _, h, r in watcher.round_changes} == {(1, 1)}
    assert committed_ids(nodes[0]) == {tx.tx_id for tx in txs}
    assert watcher.conflicts() == []


def test_recovered_node_catches_up():
    sim, nodes, watcher = network("ibft", seed=6)
    sim.inject_fault(Crash(4, 1000))
    sim.inject_fault(Recover(4, 15000))
    inject(sim, 20, start=500, spacing=300, n=4)
    sim.run_until(16000)
    for node in nodes:
        node.halted = True
    sim.run_until(40000)
    assert len({n.ledger.tip.hash for n in nodes}) == 1
    assert nodes[4].ledger.height == nodes[0].ledger.height >= 4
    assert watcher.conflicts() == []


@pytest.mark.parametrize("policy", sorted(BYZANTINE_POLICIES))
@pytest.mark.parametrize("seed", range(20))
def test_one_byzantine_validator(policy, seed):
    sim, nodes, watcher = network("ibft", seed)
    byz = seed % 5
    sim.inject_fault(Byzantine(byz, BYZANTINE_POLICIES[policy], 0))
    txs = inject(sim, 20, start=500, spacing=200)
    sim.run_until(60000)
    honest = [i for i in range(5) if i != byz]
    assert watcher.conflicts(honest) == []
    # liveness with F=1: everything that reached an honest pool finalizes
    want = {tx.tx_id for k, tx in enumerate(txs) if policy != "silence" or k % 5 != byz}
    for i in honest:
        assert want <= committed_ids(nodes[i])


@pytest.mark.parametrize("policy", sorted(BYZANTINE_POLICIES))
@pytest.mark.parametrize("seed", range(10))
def test_two_byzantine_validators_never_fork(policy, seed):
    sim, nodes, watcher = network("ibft", seed)
    byz = {seed % 5, (seed + 2) % 5}
    for b in byz:
        sim.inject_fault(Byzantine(b, BYZANTINE_POLICIES[policy], 0))
    inject(sim, 20, start=500, spacing=200)
    sim.run_until(60000)
    assert watcher.conflicts([i for i in range(5) if i not in byz]) == []


def test_round_timeout_doubles():
    sim, nodes, watcher = network("ibft", seed=0, config=IbftConfig(round_timeout_ms=1000))
    node = nodes[0]
    assert [node.round_timeout(r) for r in range(4)] == [1000, 2000, 4000, 8000]
