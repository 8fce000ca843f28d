import random
import statistics

import pytest

from npmarket.bench.workload import provider_payload
from npmarket.chain import AddNetworkProvider, Transaction
from npmarket.netsim import (CLOUD_REMOTE, INTRA_CLOUD, Byzantine, CostModel, Crash, LinkModel, Recover,
                             SchedulePast, Simulator, Topology)

from simhelp import inject, network, request_tx


class Probe:
    """Minimal node that records what reaches it."""

    def __init__(self, node_id, sim):
        self.node_id, self.sim = node_id, sim
        self.got, self.timers, self.txs, self.recovered = [], [], [], 0

    def start(self):
        pass

    def on_message(self, src, msg):
        self.got.append((self.sim.now, src, msg))

    def on_timer(self, name, data):
        self.timers.append((self.sim.now, name, data))

    def on_tx(self, tx):
        self.txs.append(tx)

    def on_recover(self):
        self.recovered += 1


def probes(topology=None, seed=0, trace=None):
    topology = topology or Topology.default()
    sim = Simulator(topology, seed, trace)
    nodes = [Probe(i, sim) for i in range(topology.n)]
    for n in nodes:
        sim.add_node(n)
    sim.start()
    return sim, nodes


def test_equal_times_fire_in_insertion_order():
    sim, nodes = probes()
    for k in range(5):
        sim.set_timer(0, 10, "t", k)
    sim.run_until(10)
    assert [d for _, _, d in nodes[0].timers] == [0, 1, 2, 3, 4]


def test_schedule_in_the_past_is_rejected():
    sim, _ = probes()
    sim.run_until(100)
    with pytest.raises(SchedulePast):
        sim.schedule(50, "timer", 0, (0, "x"), None)


def test_run_until_on_empty_queue_advances_clock():
    sim, _ = probes()
    sim.run_until(1234.5)
    assert sim.now == 1234.5 and sim.pending() == 0


@pytest.mark.parametrize("pair, link", [((0, 1), INTRA_CLOUD), ((0, 4), CLOUD_REMOTE), ((4, 2), CLOUD_REMOTE)])
def test_link_delay_statistics(pair, link):
    sim, nodes = probes(seed=11)
    src, dst = pair
    for _ in range(10_000):
        sim.send(src, dst, "m")
    sim.run_until(1e9)
    delays = [t for t, _, _ in nodes[dst].got]
    assert len(delays) == 10_000
    assert abs(statistics.mean(delays) - link.mean_ms) <= 0.05 * link.mean_ms
    assert min(delays) >= link.min_ms


def test_self_send_is_immediate():
    sim, nodes = probes()
    sim.run_until(5)
    sim.send(2, 2, "hi")
    sim.run_until(5)
    assert nodes[2].got == [(5, 2, "hi")]


def test_no_loss_delivers_everything():
    sim, nodes = probes()
    for k in range(500):
        sim.broadcast(k % 5, k)
    sim.run_until(1e6)
    assert sim.sent == sim.delivered == 500 * 4


def test_loss_drops_about_the_configured_share():
    topo = Topology.default()
    topo.loss_rate = 0.3
    sim, nodes = probes(topo, seed=3)
    for _ in range(5000):
        sim.send(0, 1, "m")
    sim.run_until(1e6)
    assert 0.65 < len(nodes[1].got) / 5000 < 0.75


def test_per_pair_overrides():
    topo = Topology.default()
    topo.link_overrides[(0, 1)] = LinkModel(100, 0, 100)
    topo.loss_overrides[(1, 0)] = 0.999999
    sim, nodes = probes(topo)
    sim.send(0, 1, "a")
    sim.send(1, 0, "b")
    sim.run_until(1e6)
    assert nodes[1].got == [(100, 0, "a")] and nodes[0].got == []


def test_topology_validation():
    with pytest.raises(ValueError):
        Topology(["a"], loss_rate=1.0)
    with pytest.raises(ValueError):
        LinkModel(1, 1, 2)
    with pytest.raises(ValueError):
        LinkModel(1, -1, 0)


def test_crashed_node_is_isolated_until_recovery():
    sim, nodes = probes()
    sim.set_timer(1, 50, "before")
    sim.inject_fault(Crash(1, 10))
    sim.inject_fault(Recover(1, 100))
    sim.run_until(20)
    sim.send(0, 1, "lost")
    sim.send(1, 0, "never sent")
    sim.inject_tx(request_tx(1, 1, 30), 1, 30)
    sim.run_until(200)
    assert nodes[1].got == [] and nodes[1].timers == [] and nodes[1].txs == []
    assert nodes[0].got == []
    assert nodes[1].recovered == 1
    sim.set_timer(1, 5, "after")
    sim.run_until(300)
    assert [name for _, name, _ in nodes[1].timers] == ["after"]


def test_byzantine_policy_filters_outgoing_messages():
    sim, nodes = probes()
    sim.inject_fault(Byzantine(0, lambda msg, src, dst, rng: None if dst == 1 else msg + "!", 0))
    sim.run_until(0)
    sim.broadcast(0, "x")
    sim.send(2, 1, "y")
    sim.run_until(1000)
    assert [m for _, _, m in nodes[1].got] == ["y"]
    assert [m for _, _, m in nodes[2].got] == ["x!"]


def test_fault_for_unknown_node_rejected():
    sim, _ = probes()
    with pytest.raises(ValueError):
        sim.inject_fault(Crash(9, 0))


def _traced_run(seed):
    trace = []
    sim, nodes, _ = network("raft", seed)
    sim._trace = trace
    inject(sim, 30, start=500, spacing=40)
    sim.run_until(5000)
    return trace, [n.ledger.tip.hash for n in nodes]


def test_same_seed_same_trace():
    a, b = _traced_run(5), _traced_run(5)
    assert a == b and len(a[0]) > 100
    assert _traced_run(6)[0] != a[0]


def test_no_delivery_before_send():
    trace = []
    sim, nodes = probes(trace=trace)
    sim.run_until(3)
    sim.send(0, 4, "m")
    sim.run_until(1000)
    (t, _, _), = nodes[4].got
    assert t >= 3 + CLOUD_REMOTE.min_ms


def test_cost_model():
    cost = CostModel(c_base_ms=1, c_scan_ms=5)
    req = request_tx(1, 0, 0)
    assert cost.tx_cost(req, 5) == 26
    assert cost.capacity_tps(5) == pytest.approx(1000 / 26)
    add = Transaction(2, "admin", AddNetworkProvider(provider_payload(random.Random(0), "p", "np0")), 0)
    # the registry grows inside a block
    assert cost.block_cost([add, req], 5) == 1 + 31
