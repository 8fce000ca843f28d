"""Brute-force reference model of the marketplace.

Written against plain lists and dicts so that it shares no code path with
:mod:`npmarket.contract`: candidate selection is filter-then-argmin, balances
and capacities are replayed with simple arithmetic. Used by the test-suite and
by ``npmarket oracle`` to cross-check the contract step by step.
"""
from __future__ import annotations

import json
from fractions import Fraction

from . import contract

LIMIT = 2**256 - 1


def _frac(x) -> Fraction:
    return Fraction(str(x))


def _sla_tuple(d: dict) -> tuple:
    return (int(d["max_latency_ms"]), int(d["min_throughput_mbps"]), _frac(d["max_packet_loss_pct"]))


class ReferenceMarket:
    def __init__(self, genesis: dict):
        self.admin = genesis["admin"]
        self.fresh_balance = int(genesis.get("new_account_balance", 0))
        self.balances = dict(genesis.get("accounts", {}))
        self.providers: list[dict] = []  # position k holds registry index k + 1
        self.leases: list[dict] = []  # position k holds lease id k + 1
        for p in genesis.get("providers", []):
            self.step({"op": "add", "caller": self.admin, "provider": p})
        for item in genesis.get("leases", []):
            outcome = self.step({"op": "request", "caller": item["caller"], "payment": item["payment"],
                                 "request": item["request"], "now": 0})
            if outcome[0] != "ok":
                raise ValueError(f"genesis lease rejected: {outcome}")

    # each step returns ("ok", value) or ("revert", reason)
    def step(self, s: dict) -> tuple:
        op = s["op"]
        if op == "add":
            return self._add(s["caller"], s["provider"])
        if op == "request":
            return self._request(s["caller"], s["request"], s["payment"], s["now"])
        if op == "return":
            return self._return(s["lease_id"], s["now"])
        if op == "select":
            return ("ok", self.select(s["request"], s.get("exclude")))
        raise ValueError(f"unknown op {op!r}")

    def _add(self, caller, p) -> tuple:
        if caller != self.admin:
            return ("revert", "NotAdmin")
        numeric = [p["cpu"], p["ram"], p["storage"], p["cost"]]
        if any(type(v) is not int or v < 0 or v > LIMIT for v in numeric):
            return ("revert", "InvalidProvider")
        if not isinstance(p["address"], str) or p["address"] == "":
            return ("revert", "InvalidProvider")
        self.providers.append({
            "address": p["address"],
            "cost": p["cost"],
            "domain": p["domain"],
            "slas": [_sla_tuple(x) for x in p.get("slas", [])],
            "vnfs": list(p.get("vnf_images", [])),
            "capacity": [p["cpu"], p["ram"], p["storage"]],
            "free": [p["cpu"], p["ram"], p["storage"]],
        })
        if p["address"] not in self.balances:
            self.balances[p["address"]] = self.fresh_balance
        return ("ok", len(self.providers))

    def _matches(self, prov: dict, r: dict) -> bool:
        want = [r["cpu"], r["ram"], r["storage"]]
        if any(prov["free"][k] < want[k] for k in range(3)):
            return False
        if prov["domain"] != r["domain"]:
            return False
        lat, thr, loss = _sla_tuple(r["sla"])
        if not any(o[0] <= lat and o[1] >= thr and o[2] <= loss for o in prov["slas"]):
            return False
        return r["vnf_image"] in prov["vnfs"]

    def select(self, r: dict, exclude=None):
        idx = [k + 1 for k, prov in enumerate(self.providers)
               if prov["address"] != exclude and self._matches(prov, r)]
        if not idx:
            return None
        # argmin cost, equal cost resolved toward the larger index
        return min(idx, key=lambda i: (self.providers[i - 1]["cost"], -i))

    def _request(self, caller, r, payment, now) -> tuple:
        amounts = [r["cpu"], r["ram"], r["storage"]]
        if any(type(v) is not int or v < 0 for v in amounts) or sum(amounts) == 0:
            return ("revert", "InvalidRequest")
        if type(r["lend_time"]) is not int or r["lend_time"] <= 0:
            return ("revert", "InvalidRequest")
        if caller not in self.balances:
            return ("revert", "UnknownAccount")
        if type(payment) is not int or payment < 0:
            return ("revert", "InsufficientPayment")
        if payment > self.balances[caller]:
            return ("revert", "InsufficientBalance")
        chosen = self.select(r, exclude=caller)
        if chosen is None:
            chosen = self.select(r)
        if chosen is None:
            return ("revert", "NoProviderFound")
        prov = self.providers[chosen - 1]
        price = sum(amounts) * prov["cost"] * r["lend_time"]
        if price > LIMIT:
            return ("revert", "ArithmeticOverflow")
        if payment < price:
            return ("revert", "InsufficientPayment")
        self.balances[caller] = self.balances[caller] - price
        self.balances[prov["address"]] = self.balances[prov["address"]] + price
        for k in range(3):
            prov["free"][k] = prov["free"][k] - amounts[k]
        self.leases.append({"supplier": chosen, "requester": caller, "amounts": amounts,
                            "start": now, "lend": r["lend_time"], "price": price, "open": True})
        return ("ok", len(self.leases))

    def _return(self, lease_id, now) -> tuple:
        if not (isinstance(lease_id, int) and 1 <= lease_id <= len(self.leases)):
            return ("revert", "UnknownLease")
        lease = self.leases[lease_id - 1]
        if not lease["open"]:
            return ("revert", "UnknownLease")
        if now < lease["start"] + 1000 * lease["lend"]:
            return ("revert", "LeaseNotExpired")
        prov = self.providers[lease["supplier"] - 1]
        for k in range(3):
            prov["free"][k] += lease["amounts"][k]
        lease["open"] = False
        return ("ok", None)

    def snapshot(self) -> dict:
        """Same shape as :func:`npmarket.contract.state_snapshot`."""
        return {
            "admin": self.admin,
            "accounts": dict(sorted(self.balances.items())),
            "providers": {
                k + 1: {"address": p["address"], "cost": p["cost"],
                        "capacity": tuple(p["capacity"]), "available": tuple(p["free"])}
                for k, p in enumerate(self.providers)
            },
            "leases": {
                k + 1: (l["supplier"], l["requester"], *l["amounts"], l["start"], l["lend"], l["price"], l["open"])
                for k, l in enumerate(self.leases)
            },
            "next_provider_index": len(self.providers) + 1,
            "next_lease_id": len(self.leases) + 1,
        }


# -- driving the real contract with the same steps -------------------------------

def contract_step(state: contract.WorldState, s: dict) -> tuple:
    op = s["op"]
    try:
        if op == "add":
            return ("ok", contract.add_network_provider(state, s["caller"],
                                                        contract.provider_spec_from_dict(s["provider"])))
        if op == "request":
            lease = contract.request_resources(state, s["caller"], contract.request_from_dict(s["request"]),
                                               s["payment"], s["now"])
            return ("ok", lease.lease_id)
        if op == "return":
            contract.return_resources(state, s["caller"], s["lease_id"], s["now"])
            return ("ok", None)
        if op == "select":
            return ("ok", contract.select_best_provider(contract.request_from_dict(s["request"]), state,
                                                        exclude_address=s.get("exclude")))
    except contract.ContractError as exc:
        return ("revert", exc.reason)
    raise ValueError(f"unknown op {op!r}")


def check_invariants(state: contract.WorldState, expected_total: int) -> list[str]:
    problems = []
    if state.total_balance() != expected_total:
        problems.append(f"currency sum {state.total_balance()} != {expected_total}")
    if any(b < 0 for b in state.accounts.values()):
        problems.append("negative balance")
    for i, p in state.providers.items():
        leased = state.leased_amounts(i)
        for k in range(3):
            if p.available[k] < 0 or p.available[k] + leased[k] != p.capacity[k]:
                problems.append(f"provider {i} dimension {k}: {p.available[k]} + {leased[k]} != {p.capacity[k]}")
    return problems


def run_scenario(scenario: dict) -> list[str]:
    """Replay ``scenario`` on both models; return human-readable mismatches.

    Conservation invariants are checked after every step as well.
    """
    genesis = scenario["genesis"]
    ref = ReferenceMarket(genesis)
    state = contract.genesis_state(genesis)
    total = state.total_balance()
    problems = []
    if contract.state_snapshot(state) != ref.snapshot():
        problems.append("genesis: state differs")
    for n, s in enumerate(scenario["steps"]):
        before = contract.state_snapshot(state)
        got = contract_step(state, s)
        want = ref.step(s)
        if got != want:
            problems.append(f"step {n} ({s['op']}): contract {got} != oracle {want}")
        if got[0] == "revert" and contract.state_snapshot(state) != before:
            problems.append(f"step {n}: reverted call mutated state")
        if contract.state_snapshot(state) != ref.snapshot():
            problems.append(f"step {n}: state differs from oracle")
        # a new registry account may receive the configured opening balance
        if s["op"] == "add" and got[0] == "ok" and s["provider"]["address"] not in before["accounts"]:
            total += state.new_account_balance
        problems.extend(f"step {n}: {p}" for p in check_invariants(state, total))
        if problems:
            break
    return problems


def load_scenario(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
