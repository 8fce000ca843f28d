"""Random contract scenarios for differential testing against the oracle."""
from __future__ import annotations

import random

DOMAINS = ("athens", "patras", "thessaloniki")
VNFS = ("fw-v1", "lb-v2", "dpi-v1", "nat-v3")
LOSSES = ("0", "1/10", "1/2", "1", "5")


def random_sla(rng: random.Random) -> dict:
    return {
        "max_latency_ms": rng.choice((5, 10, 20, 40)),
        "min_throughput_mbps": rng.choice((10, 50, 100, 500)),
        "max_packet_loss_pct": rng.choice(LOSSES),
    }


def random_provider(rng: random.Random, addresses, invalid: bool = False) -> dict:
    p = {
        "name": f"np-{rng.randrange(10**6)}",
        "cpu": rng.randint(0, 24),
        "ram": rng.randint(0, 48),
        "storage": rng.randint(0, 200),
        "cost": rng.randint(0, 5),  # narrow range so equal-cost ties are common
        "domain": rng.choice(DOMAINS),
        "slas": [random_sla(rng) for _ in range(rng.randint(0, 3))],
        "vnf_images": sorted(rng.sample(VNFS, rng.randint(0, len(VNFS)))),
        "address": rng.choice(addresses),
    }
    if invalid:
        if rng.random() < 0.5:
            p[rng.choice(("cpu", "ram", "storage", "cost"))] = -rng.randint(1, 9)
        else:
            p["address"] = ""
    return p


def random_request(rng: random.Random) -> dict:
    r = {
        "cpu": rng.randint(0, 6),
        "ram": rng.randint(0, 12),
        "storage": rng.randint(0, 40),
        "domain": rng.choice(DOMAINS),
        "sla": random_sla(rng),
        "vnf_image": rng.choice(VNFS + ("FW-V1",)),
        "lend_time": rng.randint(1, 90),
    }
    if rng.random() < 0.03:
        r["cpu"] = r["ram"] = r["storage"] = 0
    return r


def random_scenario(rng: random.Random, max_providers: int = 20, max_steps: int = 200) -> dict:
    n_accounts = rng.randint(1, 6)
    addresses = [f"acct{i}" for i in range(n_accounts)]
    n_genesis = rng.randint(0, max_providers // 2)
    genesis = {
        "admin": "admin",
        "accounts": {a: rng.choice((0, 500, 10_000, 200_000)) for a in addresses},
        "providers": [random_provider(rng, addresses + ["acct-new"]) for _ in range(n_genesis)],
    }
    steps = []
    now = 0
    n_providers = n_genesis
    for _ in range(rng.randint(1, max_steps)):
        now += rng.choice((0, 0, 500, 5_000, 30_000))
        roll = rng.random()
        if roll < 0.12 and n_providers < max_providers:
            caller = "admin" if rng.random() < 0.85 else rng.choice(addresses)
            invalid = rng.random() < 0.1
            steps.append({"op": "add", "caller": caller,
                          "provider": random_provider(rng, addresses + ["acct-new"], invalid)})
            if caller == "admin" and not invalid:
                n_providers += 1
        elif roll < 0.62:
            caller = rng.choice(addresses + ["stranger"] if rng.random() < 0.05 else addresses)
            req = random_request(rng)
            units = req["cpu"] + req["ram"] + req["storage"]
            payment = rng.choice((0, units * rng.randint(0, 5) * req["lend_time"], units * 5 * req["lend_time"],
                                  rng.randint(0, 300_000)))
            steps.append({"op": "request", "caller": caller, "request": req, "payment": payment, "now": now})
        elif roll < 0.9:
            steps.append({"op": "return", "caller": rng.choice(addresses), "lease_id": rng.randint(0, 40),
                          "now": now})
        else:
            steps.append({"op": "select", "request": random_request(rng),
                          "exclude": rng.choice(addresses + [None])})
    return {"genesis": genesis, "steps": steps}
