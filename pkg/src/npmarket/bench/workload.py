"""Fixed-rate workload: genesis documents and injection schedules."""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..chain import AddNetworkProvider, FUNCTIONS, RequestResources, ReturnResources, Transaction
from ..contract import ProviderSpec, ResourceRequest, Sla, provider_spec_to_dict, request_to_dict

ADD, REQUEST, RETURN = FUNCTIONS
ADMIN = "admin"
ACCOUNT_BALANCE = 10 ** 15
MAX_UNIT_COST = 10
DOMAIN = "edge"
VNF_IMAGES = ("FW-V1", "DPI-V2", "LB-V1", "NAT-V3")
PROVIDER_SLA = Sla(10, 1000, 1)
GENESIS_LEND_TIME_S = 1


@dataclass
class WorkloadSpec:
    itr: float
    duration_s: float
    mix: dict = field(default_factory=lambda: {REQUEST: 1.0})
    tx_timeout_s: float = 60.0
    registry_size: int = 5
    warmup_s: float = 5.0
    invalid_payment_frac: float = 0.0
    no_match_frac: float = 0.0

    def __post_init__(self):
        if not self.itr > 0:
            raise ValueError(f"itr must be positive, got {self.itr}")
        if not self.duration_s > 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if not self.tx_timeout_s > 0 or self.warmup_s < 0 or self.registry_size < 0:
            raise ValueError("tx_timeout_s must be positive; warmup_s and registry_size non-negative")
        unknown = set(self.mix) - set(FUNCTIONS)
        if unknown:
            raise ValueError(f"unknown functions in mix: {sorted(unknown)}")
        if any(w < 0 for w in self.mix.values()) or abs(sum(self.mix.values()) - 1.0) > 1e-9:
            raise ValueError(f"mix weights must be non-negative and sum to 1: {self.mix}")
        if not 0 <= self.invalid_payment_frac + self.no_match_frac <= 1:
            raise ValueError("invalid_payment_frac + no_match_frac must lie in [0, 1]")
        if self.mix.get(RETURN, 0) > 0 and self.registry_size == 0:
            raise ValueError("returnResources needs at least one pre-registered provider")

    @property
    def count(self) -> int:
        return int(self.itr * self.duration_s + 1e-9)

    @property
    def spacing_ms(self) -> float:
        return 1000.0 / self.itr


def account(node: int) -> str:
    return f"np{node}"


def provider_payload(rng: random.Random, name: str, address: str) -> ProviderSpec:
    big = 10 ** 9  # effectively unlimited, so capacity never drives failures
    return ProviderSpec(
        name=name, cpu=big, ram=big, storage=big,
        cost=rng.randint(1, MAX_UNIT_COST),
        domain=DOMAIN,
        slas=frozenset({PROVIDER_SLA}),
        vnf_images=frozenset(VNF_IMAGES),
        address=address,
    )


def request_payload(rng: random.Random, no_match: bool = False) -> tuple[ResourceRequest, int]:
    """A request every default provider can serve, and a payment covering any price."""
    req = ResourceRequest(
        cpu=rng.randint(1, 4), ram=rng.randint(1, 8), storage=rng.randint(1, 16),
        domain=DOMAIN,
        sla=Sla(rng.randint(20, 100), rng.randint(10, 500), rng.choice([1, 2, 5])),
        vnf_image="NO-SUCH-VNF" if no_match else rng.choice(VNF_IMAGES),
        lend_time=rng.randint(1, 3600),
    )
    payment = (req.cpu + req.ram + req.storage) * MAX_UNIT_COST * req.lend_time
    return req, payment


@dataclass
class Workload:
    genesis: dict
    txs: list  # (node, Transaction) in submission order


def generate(spec: WorkloadSpec, seed: int, n_nodes: int = 5) -> Workload:
    """Build the genesis document and the injection schedule for one round.

    Transaction ``k`` is submitted at ``warmup + k / itr`` seconds to node
    ``k mod n``. Returns consume leases created in the genesis state; they
    expire before the measured round starts.
    """
    rng = random.Random(seed)
    functions = list(spec.mix)
    weights = [spec.mix[f] for f in functions]
    chosen = [functions[0] if len(functions) == 1 else rng.choices(functions, weights)[0]
              for _ in range(spec.count)]

    genesis = {
        "admin": ADMIN,
        "accounts": {account(i): ACCOUNT_BALANCE for i in range(n_nodes)},
        "providers": [],
        "leases": [],
    }
    genesis["accounts"][ADMIN] = 0
    for i in range(spec.registry_size):
        genesis["providers"].append(provider_spec_to_dict(
            provider_payload(rng, f"provider-{i}", account(i % n_nodes))))

    txs = []
    lease_id = 0
    for k, fn in enumerate(chosen):
        node = k % n_nodes
        at = spec.warmup_s * 1000.0 + k * spec.spacing_ms
        if fn == ADD:
            call = AddNetworkProvider(provider_payload(rng, f"provider-new-{k}", account(node)))
            sender = ADMIN
        elif fn == REQUEST:
            u = rng.random()
            no_match = spec.invalid_payment_frac <= u < spec.invalid_payment_frac + spec.no_match_frac
            req, payment = request_payload(rng, no_match=no_match)
            if u < spec.invalid_payment_frac:
                payment = ACCOUNT_BALANCE * 10  # more than the sender holds
            call = RequestResources(req, payment)
            sender = account(node)
        else:
            req, payment = request_payload(rng)
            req = ResourceRequest(req.cpu, req.ram, req.storage, req.domain, req.sla, req.vnf_image,
                                  GENESIS_LEND_TIME_S)
            payment = (req.cpu + req.ram + req.storage) * MAX_UNIT_COST * GENESIS_LEND_TIME_S
            genesis["leases"].append({"caller": account(node), "payment": payment,
                                      "request": request_to_dict(req)})
            lease_id += 1
            call = ReturnResources(lease_id)
            sender = account(node)
        txs.append((node, Transaction(k + 1, sender, call, at)))
    return Workload(genesis, txs)
