import random

import pytest

from npmarket import contract
from npmarket.oracle import ReferenceMarket, run_scenario
from npmarket.scenarios import random_scenario


@pytest.mark.parametrize("seed", range(100))
def test_contract_matches_reference(seed):
    assert run_scenario(random_scenario(random.Random(seed))) == []


def test_scenarios_exercise_every_outcome():
    outcomes = set()
    rng = random.Random(0)
    for _ in range(200):
        scenario = random_scenario(rng)
        ref = ReferenceMarket(scenario["genesis"])
        for step in scenario["steps"]:
            result = ref.step(step)
            outcomes.add(result[1] if result[0] == "revert" else ("ok", step["op"]))
    for expected in ("NotAdmin", "InvalidProvider", "InvalidRequest", "UnknownAccount", "InsufficientBalance",
                     "NoProviderFound", "InsufficientPayment", "UnknownLease", "LeaseNotExpired",
                     ("ok", "add"), ("ok", "request"), ("ok", "return"), ("ok", "select")):
        assert expected in outcomes


def test_reference_catches_a_wrong_tie_rule(monkeypatch):
    """Sanity check on the harness: a subtly broken contract must be caught."""

    def lowest_index_wins(req, state, exclude_address=None):
        best, best_cost = None, 0
        for i in range(1, state.next_provider_index):
            p = state.providers.get(i)
            if p is None or p.address == exclude_address or not contract.is_candidate(p, req):
                continue
            if best is None or p.cost < best_cost:
                best, best_cost = i, p.cost
        return best

    monkeypatch.setattr(contract, "select_best_provider", lowest_index_wins)
    rng = random.Random(1)
    assert any(run_scenario(random_scenario(rng)) for _ in range(100))


def test_reference_catches_broken_conservation(monkeypatch):
    original = contract.request_resources

    def leaky(state, caller, req, payment, now):
        lease = original(state, caller, req, payment, now)
        state.accounts[caller] -= 1
        return lease

    monkeypatch.setattr(contract, "request_resources", leaky)
    rng = random.Random(2)
    assert any(run_scenario(random_scenario(rng)) for _ in range(50))


def test_handwritten_scenario():
    scenario = {
        "genesis": {"admin": "admin", "accounts": {"a": 1000, "b": 0}},
        "steps": [
            {"op": "add", "caller": "admin", "provider": {
                "name": "x", "cpu": 4, "ram": 4, "storage": 4, "cost": 2, "domain": "d",
                "slas": [{"max_latency_ms": 5, "min_throughput_mbps": 100, "max_packet_loss_pct": "1/2"}],
                "vnf_images": ["FW"], "address": "b"}},
            {"op": "request", "caller": "a", "payment": 100, "now": 0, "request": {
                "cpu": 1, "ram": 1, "storage": 1, "domain": "d",
                "sla": {"max_latency_ms": 10, "min_throughput_mbps": 50, "max_packet_loss_pct": "1"},
                "vnf_image": "FW", "lend_time": 2}},
            {"op": "return", "caller": "a", "lease_id": 1, "now": 1999},
            {"op": "return", "caller": "a", "lease_id": 1, "now": 2000},
        ],
    }
    assert run_scenario(scenario) == []
    ref = ReferenceMarket(scenario["genesis"])
    results = [ref.step(s) for s in scenario["steps"]]
    assert results == [("ok", 1), ("ok", 1), ("revert", "LeaseNotExpired"), ("ok", None)]
    assert ref.balances == {"a": 988, "b": 12}
