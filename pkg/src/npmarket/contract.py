"""Resource marketplace contract.

A deterministic state machine over providers, accounts and leases. Every
operation validates its inputs before touching the state, so a call that
raises :class:`ContractError` leaves the world state exactly as it found it.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

UINT256_MAX = 2**256 - 1


class ContractError(Exception):
    """Base class for reverting calls. ``reason`` is the revert tag."""

    @property
    def reason(self) -> str:
        return type(self).__name__


class NotAdmin(ContractError):
    pass


class InvalidProvider(ContractError):
    pass


class InvalidRequest(ContractError):
    pass


class UnknownAccount(ContractError):
    pass


class InsufficientBalance(ContractError):
    pass


class NoProviderFound(ContractError):
    pass


class InsufficientPayment(ContractError):
    pass


class ArithmeticOverflow(ContractError):
    pass


class UnknownLease(ContractError):
    pass


class LeaseNotExpired(ContractError):
    pass


def _is_uint(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and 0 <= value <= UINT256_MAX


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        # go through str so 0.1 means one tenth, not its binary neighbour
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True, order=True)
class Sla:
    max_latency_ms: int
    min_throughput_mbps: int
    max_packet_loss_pct: Fraction

    def __post_init__(self):
        object.__setattr__(self, "max_packet_loss_pct", _as_fraction(self.max_packet_loss_pct))
        if not (_is_uint(self.max_latency_ms) and _is_uint(self.min_throughput_mbps)):
            raise ValueError(f"SLA latency/throughput must be non-negative integers: {self!r}")
        if not 0 <= self.max_packet_loss_pct <= 100:
            raise ValueError(f"SLA packet loss must be within [0, 100]: {self!r}")

    def dominates(self, requested: "Sla") -> bool:
        return (
            self.max_latency_ms <= requested.max_latency_ms
            and self.min_throughput_mbps >= requested.min_throughput_mbps
            and self.max_packet_loss_pct <= requested.max_packet_loss_pct
        )


@dataclass(frozen=True)
class ProviderSpec:
    """Registration payload: a provider before it has a registry index."""

    name: str
    cpu: int
    ram: int
    storage: int
    cost: int
    domain: str
    slas: frozenset = frozenset()
    vnf_images: frozenset = frozenset()
    address: str = ""

    def __post_init__(self):
        object.__setattr__(self, "slas", frozenset(self.slas))
        object.__setattr__(self, "vnf_images", frozenset(self.vnf_images))


@dataclass
class NetworkProvider:
    index: int
    name: str
    cpu: int
    ram: int
    storage: int
    cost: int
    domain: str
    slas: frozenset
    vnf_images: frozenset
    address: str
    avail_cpu: int
    avail_ram: int
    avail_storage: int

    @property
    def capacity(self) -> tuple[int, int, int]:
        return (self.cpu, self.ram, self.storage)

    @property
    def available(self) -> tuple[int, int, int]:
        return (self.avail_cpu, self.avail_ram, self.avail_storage)


@dataclass(frozen=True)
class ResourceRequest:
    cpu: int
    ram: int
    storage: int
    domain: str
    sla: Sla
    vnf_image: str
    lend_time: int  # seconds


@dataclass
class Lease:
    lease_id: int
    supplier_index: int
    requester_address: str
    cpu: int
    ram: int
    storage: int
    start_time: int  # ms
    lend_time: int  # s
    price: int
    active: bool = True

    @property
    def expires_at(self) -> int:
        return self.start_time + self.lend_time * 1000


@dataclass
class WorldState:
    admin_address: str
    accounts: dict[str, int] = field(default_factory=dict)
    providers: dict[int, NetworkProvider] = field(default_factory=dict)
    leases: dict[int, Lease] = field(default_factory=dict)
    next_provider_index: int = 1
    next_lease_id: int = 1
    # balance given to accounts created on registration; 0 keeps currency conserved
    new_account_balance: int = 0

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    def total_balance(self) -> int:
        return sum(self.accounts.values())

    def leased_amounts(self, provider_index: int) -> tuple[int, int, int]:
        cpu = ram = storage = 0
        for lease in self.leases.values():
            if lease.active and lease.supplier_index == provider_index:
                cpu += lease.cpu
                ram += lease.ram
                storage += lease.storage
        return (cpu, ram, storage)


# -- validation ---------------------------------------------------------------

def validate_provider(spec: ProviderSpec) -> None:
    if not isinstance(spec.name, str) or not isinstance(spec.domain, str):
        raise InvalidProvider("name and domain must be strings")
    for attr in ("cpu", "ram", "storage", "cost"):
        if not _is_uint(getattr(spec, attr)):
            raise InvalidProvider(f"{attr} must be a non-negative 256-bit integer")
    if not isinstance(spec.address, str) or not spec.address:
        raise InvalidProvider("address must be a non-empty string")
    if not all(isinstance(s, Sla) for s in spec.slas):
        raise InvalidProvider("slas must be Sla records")
    if not all(isinstance(v, str) for v in spec.vnf_images):
        raise InvalidProvider("vnf images must be strings")


def validate_request(req: ResourceRequest) -> None:
    for attr in ("cpu", "ram", "storage"):
        if not _is_uint(getattr(req, attr)):
            raise InvalidRequest(f"{attr} must be a non-negative integer")
    if req.cpu == req.ram == req.storage == 0:
        raise InvalidRequest("at least one resource amount must be positive")
    if not _is_uint(req.lend_time) or req.lend_time == 0:
        raise InvalidRequest("lend_time must be a positive integer")
    if not isinstance(req.sla, Sla):
        raise InvalidRequest("sla must be an Sla record")
    if not isinstance(req.domain, str) or not isinstance(req.vnf_image, str):
        raise InvalidRequest("domain and vnf_image must be strings")


# -- matching -----------------------------------------------------------------

def sla_satisfied(provider_slas, requested: Sla) -> bool:
    """True iff some offered SLA is at least as good as ``requested`` on all three axes."""
    return any(offered.dominates(requested) for offered in provider_slas)


def vnf_supported(provider_images, requested: str) -> bool:
    return requested in provider_images


def is_candidate(provider: NetworkProvider, req: ResourceRequest) -> bool:
    return (
        provider.avail_cpu >= req.cpu
        and provider.avail_ram >= req.ram
        and provider.avail_storage >= req.storage
        and provider.domain == req.domain
        and sla_satisfied(provider.slas, req.sla)
        and vnf_supported(provider.vnf_images, req.vnf_image)
    )


def select_best_provider(
    req: ResourceRequest, state: WorldState, exclude_address: Optional[str] = None
) -> Optional[int]:
    """Cheapest matching provider index, or None.

    Indices are scanned in ascending order and a later provider replaces the
    incumbent when its cost is *less than or equal*, so equal-cost ties go to
    the highest index. Providers owned by ``exclude_address`` are skipped.
    """
    best: Optional[int] = None
    best_cost = 0
    for i in range(1, state.next_provider_index):
        provider = state.providers.get(i)
        if provider is None or provider.address == exclude_address:
            continue
        if not is_candidate(provider, req):
            continue
        if best is None or provider.cost <= best_cost:
            best, best_cost = i, provider.cost
    return best


def calculate_best_cost(provider: NetworkProvider, req: ResourceRequest) -> int:
    """Lease price: total resource units x unit cost x lend seconds."""
    price = (req.cpu + req.ram + req.storage) * provider.cost * req.lend_time
    if price > UINT256_MAX:
        raise ArithmeticOverflow(f"price {price} exceeds uint256")
    return price


# -- state transitions --------------------------------------------------------

def add_network_provider(state: WorldState, caller: str, spec: ProviderSpec) -> int:
    if caller != state.admin_address:
        raise NotAdmin(f"{caller!r} is not the administrator")
    validate_provider(spec)
    index = state.next_provider_index
    state.providers[index] = NetworkProvider(
        index=index,
        name=spec.name,
        cpu=spec.cpu,
        ram=spec.ram,
        storage=spec.storage,
        cost=spec.cost,
        domain=spec.domain,
        slas=spec.slas,
        vnf_images=spec.vnf_images,
        address=spec.address,
        avail_cpu=spec.cpu,
        avail_ram=spec.ram,
        avail_storage=spec.storage,
    )
    state.next_provider_index = index + 1
    state.accounts.setdefault(spec.address, state.new_account_balance)
    return index


def request_resources(
    state: WorldState, caller: str, req: ResourceRequest, payment: int, now: int
) -> Lease:
    """Lease the cheapest matching provider's resources to ``caller``.

    Checks run in a fixed order (request shape, caller account, payment vs
    balance, provider match, price, payment vs price) so that every replica
    reports the same revert reason. A caller's own providers are only used when
    no other provider matches. Only the exact price is debited.
    """
    validate_request(req)
    if caller not in state.accounts:
        raise UnknownAccount(f"no account for {caller!r}")
    if not _is_uint(payment):
        raise InsufficientPayment("payment must be a non-negative integer")
    if payment > state.accounts[caller]:
        raise InsufficientBalance(f"payment {payment} exceeds balance {state.accounts[caller]}")

    index = select_best_provider(req, state, exclude_address=caller)
    if index is None:
        index = select_best_provider(req, state)
    if index is None:
        raise NoProviderFound("no provider satisfies the request")
    supplier = state.providers[index]
    price = calculate_best_cost(supplier, req)
    if payment < price:
        raise InsufficientPayment("The Ether was not enough (3)")

    state.accounts[caller] -= price
    state.accounts[supplier.address] += price
    supplier.avail_cpu -= req.cpu
    supplier.avail_ram -= req.ram
    supplier.avail_storage -= req.storage
    lease = Lease(
        lease_id=state.next_lease_id,
        supplier_index=index,
        requester_address=caller,
        cpu=req.cpu,
        ram=req.ram,
        storage=req.storage,
        start_time=now,
        lend_time=req.lend_time,
        price=price,
    )
    state.leases[lease.lease_id] = lease
    state.next_lease_id += 1
    return lease


def return_resources(state: WorldState, caller: str, lease_id: int, now: int) -> None:
    lease = state.leases.get(lease_id)
    if lease is None or not lease.active:
        raise UnknownLease(f"lease {lease_id} is not active")
    if now < lease.expires_at:
        raise LeaseNotExpired(f"lease {lease_id} expires at {lease.expires_at}, now {now}")
    supplier = state.providers[lease.supplier_index]
    supplier.avail_cpu += lease.cpu
    supplier.avail_ram += lease.ram
    supplier.avail_storage += lease.storage
    lease.active = False


# -- genesis ------------------------------------------------------------------

def sla_from_dict(d: dict) -> Sla:
    return Sla(int(d["max_latency_ms"]), int(d["min_throughput_mbps"]), _as_fraction(str(d["max_packet_loss_pct"])))


def sla_to_dict(s: Sla) -> dict:
    return {
        "max_latency_ms": s.max_latency_ms,
        "min_throughput_mbps": s.min_throughput_mbps,
        "max_packet_loss_pct": str(s.max_packet_loss_pct),
    }


def provider_spec_from_dict(d: dict) -> ProviderSpec:
    return ProviderSpec(
        name=d["name"],
        cpu=d["cpu"],
        ram=d["ram"],
        storage=d["storage"],
        cost=d["cost"],
        domain=d["domain"],
        slas=frozenset(sla_from_dict(s) for s in d.get("slas", [])),
        vnf_images=frozenset(d.get("vnf_images", [])),
        address=d["address"],
    )


def provider_spec_to_dict(p: ProviderSpec) -> dict:
    return {
        "name": p.name,
        "cpu": p.cpu,
        "ram": p.ram,
        "storage": p.storage,
        "cost": p.cost,
        "domain": p.domain,
        "slas": [sla_to_dict(s) for s in sorted(p.slas)],
        "vnf_images": sorted(p.vnf_images),
        "address": p.address,
    }


def request_from_dict(d: dict) -> ResourceRequest:
    return ResourceRequest(
        cpu=d["cpu"],
        ram=d["ram"],
        storage=d["storage"],
        domain=d["domain"],
        sla=sla_from_dict(d["sla"]),
        vnf_image=d["vnf_image"],
        lend_time=d["lend_time"],
    )


def request_to_dict(r: ResourceRequest) -> dict:
    return {
        "cpu": r.cpu,
        "ram": r.ram,
        "storage": r.storage,
        "domain": r.domain,
        "sla": sla_to_dict(r.sla),
        "vnf_image": r.vnf_image,
        "lend_time": r.lend_time,
    }


def genesis_state(genesis: dict) -> WorldState:
    """Build the initial world state from a genesis document.

    Keys: ``admin`` (required), ``accounts`` (address -> balance),
    ``new_account_balance``, ``providers`` (registration payloads, added by
    the admin in order) and ``leases`` (requests executed at time 0, each
    ``{"caller", "payment", "request"}``).
    """
    try:
        admin = genesis["admin"]
    except KeyError:
        raise ValueError("genesis document has no 'admin' address") from None
    state = WorldState(admin_address=admin, new_account_balance=int(genesis.get("new_account_balance", 0)))
    for address, balance in genesis.get("accounts", {}).items():
        if not _is_uint(balance):
            raise ValueError(f"balance for {address!r} must be a non-negative integer")
        state.accounts[address] = balance
    for p in genesis.get("providers", []):
        add_network_provider(state, admin, provider_spec_from_dict(p))
    for item in genesis.get("leases", []):
        request_resources(state, item["caller"], request_from_dict(item["request"]), item["payment"], 0)
    return state


def state_snapshot(state: WorldState) -> dict:
    """Plain-data view used to compare replicas and the reference model."""
    return {
        "admin": state.admin_address,
        "accounts": dict(sorted(state.accounts.items())),
        "providers": {
            i: {
                "address": p.address,
                "cost": p.cost,
                "capacity": p.capacity,
                "available": p.available,
            }
            for i, p in sorted(state.providers.items())
        },
        "leases": {
            lid: (l.supplier_index, l.requester_address, l.cpu, l.ram, l.storage,
                  l.start_time, l.lend_time, l.price, l.active)
            for lid, l in sorted(state.leases.items())
        },
        "next_provider_index": state.next_provider_index,
        "next_lease_id": state.next_lease_id,
    }
