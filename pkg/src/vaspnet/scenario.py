"""Scenario files: the structured-text schema driving a simulation run.

A scenario is a YAML key-value tree wiring networks, CAs, VASPs, peering
links, customers, suspect entries, and a timed action script. Everything is
validated up front; dangling references and decreasing script ticks are
schema errors naming the offending reference.

Schema (all ids are strings; every referenced id must be declared):

    seed: 42                       # 64-bit simulation seed
    chain: {chain_id: simchain, confirmation_delay: 3}
    defaults: {max_latency: 3, drop_probability: 0.0, drain_ticks: 40}
    networks:
      - network_id: net-a
        rules: {directory_sync_period: 10, crl_exchange_period: 20,
                ack_timeout: 10, minimum_certificate_class: class1}
    cas:
      - {ca_id: ca-1}
    vasps:
      - {vasp_id: v1, ca: ca-1, networks: [net-a]}
    peering_links:
      - {vasp_a: v1, network_a: net-a, vasp_b: v2, network_b: net-b}
    customers:
      - {customer_id: alice, vasp: v1, custody_model: mediated,
         requested_class: class1, attributes: {name: Alice, email: a@x}}
    suspect_entries:
      - {customer: mallory}        # or {account_id: "..."} / {key_hash_hex: "..."}
    script:
      - {tick: 0, action: open_account, customer: alice}
      - {tick: 1, action: enroll, customer: alice}
      - {tick: 15, action: transfer, origin: alice,
         target: {customer: bob}, amount: 100, asset: coin}
      - {tick: 20, action: p2p_transfer, from_wallet: w1, to_wallet: w2,
         amount: 5, asset: coin}
      - {tick: 25, action: revoke_cert, customer: bob, reason: keyCompromise}
      - {tick: 30, action: drop_link, a: v1, b: v2, period: 15}
      - {tick: 60, action: advance, ticks: 20}

Transfer targets: {customer: id} (beneficiary key hash; account reference for
commingled customers), {customer_key: id} (raw public key), {vasp: id,
account: id}, or {key_hash_hex: "..."} for arbitrary hashes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .ca import CertClass
from .vasp import CustodyModel

VALID_ACTIONS = {
    "open_account", "enroll", "transfer", "p2p_transfer",
    "revoke_cert", "drop_link", "advance",
}

REVOCATION_REASONS = {
    "keyCompromise", "affiliationChanged", "superseded",
    "cessationOfOperation", "unspecified",
}


class SchemaError(Exception):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    network_id: str
    rules: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class CaSpec:
    ca_id: str


@dataclass(frozen=True)
class VaspSpec:
    vasp_id: str
    ca: str
    networks: tuple[str, ...]


@dataclass(frozen=True)
class PeeringSpec:
    vasp_a: str
    network_a: str
    vasp_b: str
    network_b: str


@dataclass(frozen=True)
class CustomerSpec:
    customer_id: str
    vasp: str
    custody_model: CustodyModel
    requested_class: CertClass
    attributes: Mapping[str, str]


@dataclass(frozen=True)
class SuspectSpec:
    customer: Optional[str] = None
    account_id: Optional[str] = None
    key_hash_hex: Optional[str] = None


@dataclass(frozen=True)
class ScriptAction:
    tick: int
    action: str
    params: Mapping[str, Any]


@dataclass(frozen=True)
class Scenario:
    seed: int
    networks: tuple[NetworkSpec, ...]
    cas: tuple[CaSpec, ...]
    vasps: tuple[VaspSpec, ...]
    peering_links: tuple[PeeringSpec, ...]
    customers: tuple[CustomerSpec, ...]
    suspects: tuple[SuspectSpec, ...]
    script: tuple[ScriptAction, ...]
    chain_id: str = "simchain"
    confirmation_delay: int = 3
    max_latency: int = 3
    drop_probability: float = 0.0
    drain_ticks: int = 40

    def horizon(self) -> int:
        last = max((a.tick for a in self.script), default=0)
        extra = sum(
            int(a.params.get("ticks", 0)) for a in self.script if a.action == "advance"
        )
        return last + extra + self.drain_ticks


def _require(mapping: Mapping[str, Any], key: str, context: str) -> Any:
    if key not in mapping:
        raise SchemaError(f"{context}: missing required key {key!r}")
    return mapping[key]


def _parse_class(value: Any, context: str) -> CertClass:
    try:
        return CertClass.from_label(str(value))
    except ValueError as exc:
        raise SchemaError(f"{context}: {exc}") from exc


def _parse_model(value: Any, context: str) -> CustodyModel:
    try:
        return CustodyModel(str(value))
    except ValueError as exc:
        raise SchemaError(f"{context}: unknown custody model {value!r}") from exc


def parse_scenario(data: Mapping[str, Any]) -> Scenario:
    if not isinstance(data, Mapping):
        raise SchemaError("scenario root must be a mapping")

    networks = tuple(
        NetworkSpec(
            network_id=str(_require(raw, "network_id", "networks[]")),
            rules=dict(raw.get("rules", {})),
        )
        for raw in data.get("networks", [])
    )
    cas = tuple(CaSpec(ca_id=str(_require(raw, "ca_id", "cas[]"))) for raw in data.get("cas", []))
    vasps = tuple(
        VaspSpec(
            vasp_id=str(_require(raw, "vasp_id", "vasps[]")),
            ca=str(_require(raw, "ca", "vasps[]")),
            networks=tuple(str(n) for n in raw.get("networks", [])),
        )
        for raw in data.get("vasps", [])
    )
    peering = tuple(
        PeeringSpec(
            vasp_a=str(_require(raw, "vasp_a", "peering_links[]")),
            network_a=str(_require(raw, "network_a", "peering_links[]")),
            vasp_b=str(_require(raw, "vasp_b", "peering_links[]")),
            network_b=str(_require(raw, "network_b", "peering_links[]")),
        )
        for raw in data.get("peering_links", [])
    )
    customers = tuple(
        CustomerSpec(
            customer_id=str(_require(raw, "customer_id", "customers[]")),
            vasp=str(_require(raw, "vasp", "customers[]")),
            custody_model=_parse_model(raw.get("custody_model", "mediated"), "customers[]"),
            requested_class=_parse_class(raw.get("requested_class", "class1"), "customers[]"),
            attributes={str(k): str(v) for k, v in raw.get("attributes", {}).items()},
        )
        for raw in data.get("customers", [])
    )
    suspects = tuple(
        SuspectSpec(
            customer=raw.get("customer"),
            account_id=raw.get("account_id"),
            key_hash_hex=raw.get("key_hash_hex"),
        )
        for raw in data.get("suspect_entries", data.get("suspects", []))
    )
    script = tuple(
        ScriptAction(
            tick=int(_require(raw, "tick", "script[]")),
            action=str(_require(raw, "action", "script[]")),
            params={k: v for k, v in raw.items() if k not in ("tick", "action")},
        )
        for raw in data.get("script", [])
    )

    chain_cfg = data.get("chain", {})
    defaults = data.get("defaults", {})
    scenario = Scenario(
        seed=int(data.get("seed", 0)),
        networks=networks,
        cas=cas,
        vasps=vasps,
        peering_links=peering,
        customers=customers,
        suspects=suspects,
        script=script,
        chain_id=str(chain_cfg.get("chain_id", "simchain")),
        confirmation_delay=int(chain_cfg.get("confirmation_delay", 3)),
        max_latency=int(defaults.get("max_latency", 3)),
        drop_probability=float(defaults.get("drop_probability", 0.0)),
        drain_ticks=int(defaults.get("drain_ticks", 40)),
    )
    validate_scenario(scenario)
    return scenario


def validate_scenario(scenario: Scenario) -> None:
    network_ids = {n.network_id for n in scenario.networks}
    ca_ids = {c.ca_id for c in scenario.cas}
    vasp_ids = {v.vasp_id for v in scenario.vasps}
    customer_ids = {c.customer_id for c in scenario.customers}

    for collection, name in (
        (scenario.networks, "network_id"), (scenario.cas, "ca_id"),
        (scenario.vasps, "vasp_id"), (scenario.customers, "customer_id"),
    ):
        ids = [getattr(item, name) for item in collection]
        for dup in {i for i in ids if ids.count(i) > 1}:
            raise SchemaError(f"duplicate {name} {dup!r}")

    vasp_networks = {v.vasp_id: set(v.networks) for v in scenario.vasps}
    for vasp in scenario.vasps:
        if vasp.ca not in ca_ids:
            raise SchemaError(f"vasp {vasp.vasp_id!r} references unknown ca {vasp.ca!r}")
        for network_id in vasp.networks:
            if network_id not in network_ids:
                raise SchemaError(
                    f"vasp {vasp.vasp_id!r} references unknown network {network_id!r}"
                )
    for link in scenario.peering_links:
        for vasp_id, network_id, side in (
            (link.vasp_a, link.network_a, "a"), (link.vasp_b, link.network_b, "b"),
        ):
            if vasp_id not in vasp_ids:
                raise SchemaError(f"peering link references unknown vasp {vasp_id!r}")
            if network_id not in network_ids:
                raise SchemaError(f"peering link references unknown network {network_id!r}")
            if network_id not in vasp_networks[vasp_id]:
                raise SchemaError(
                    f"peering gateway {vasp_id!r} is not a member of {network_id!r}"
                )
        if link.network_a == link.network_b:
            raise SchemaError("peering link must connect two different networks")
    for customer in scenario.customers:
        if customer.vasp not in vasp_ids:
            raise SchemaError(
                f"customer {customer.customer_id!r} references unknown vasp {customer.vasp!r}"
            )
    for suspect in scenario.suspects:
        given = [v for v in (suspect.customer, suspect.account_id, suspect.key_hash_hex) if v]
        if len(given) != 1:
            raise SchemaError(
                "suspect entries take exactly one of customer/account_id/key_hash_hex"
            )
        if suspect.customer is not None and suspect.customer not in customer_ids:
            raise SchemaError(f"suspect references unknown customer {suspect.customer!r}")

    previous_tick = 0
    for index, action in enumerate(scenario.script):
        context = f"script[{index}] ({action.action})"
        if action.tick < previous_tick:
            raise SchemaError(f"{context}: tick {action.tick} decreases")
        previous_tick = action.tick
        if action.action not in VALID_ACTIONS:
            raise SchemaError(f"{context}: unknown action")
        params = action.params
        if action.action in ("open_account", "enroll"):
            if params.get("customer") not in customer_ids:
                raise SchemaError(f"{context}: unknown customer {params.get('customer')!r}")
        elif action.action == "transfer":
            if params.get("origin") not in customer_ids:
                raise SchemaError(f"{context}: unknown origin {params.get('origin')!r}")
            _validate_target(params.get("target"), customer_ids, vasp_ids, context)
            if int(params.get("amount", 0)) <= 0:
                raise SchemaError(f"{context}: amount must be positive")
        elif action.action == "p2p_transfer":
            if "from_wallet" not in params:
                raise SchemaError(f"{context}: from_wallet required")
            if "to_wallet" not in params and params.get("to_customer") not in customer_ids:
                raise SchemaError(f"{context}: to_wallet or a known to_customer required")
            if int(params.get("amount", 0)) <= 0:
                raise SchemaError(f"{context}: amount must be positive")
        elif action.action == "revoke_cert":
            if params.get("customer") not in customer_ids:
                raise SchemaError(f"{context}: unknown customer {params.get('customer')!r}")
            if params.get("reason", "unspecified") not in REVOCATION_REASONS:
                raise SchemaError(f"{context}: unknown reason {params.get('reason')!r}")
        elif action.action == "drop_link":
            for side in ("a", "b"):
                actor = params.get(side)
                if actor not in vasp_ids and actor not in ca_ids:
                    raise SchemaError(f"{context}: unknown endpoint {actor!r}")
            if int(params.get("period", 0)) <= 0:
                raise SchemaError(f"{context}: period must be positive")
        elif action.action == "advance":
            if int(params.get("ticks", 0)) <= 0:
                raise SchemaError(f"{context}: ticks must be positive")


def _validate_target(target: Any, customer_ids: set, vasp_ids: set, context: str) -> None:
    if not isinstance(target, Mapping):
        raise SchemaError(f"{context}: target must be a mapping")
    if "customer" in target:
        if target["customer"] not in customer_ids:
            raise SchemaError(f"{context}: unknown target customer {target['customer']!r}")
    elif "customer_key" in target:
        if target["customer_key"] not in customer_ids:
            raise SchemaError(f"{context}: unknown target customer {target['customer_key']!r}")
    elif "vasp" in target:
        if target["vasp"] not in vasp_ids:
            raise SchemaError(f"{context}: unknown target vasp {target['vasp']!r}")
        if "account" not in target:
            raise SchemaError(f"{context}: vasp target needs an account")
    elif "key_hash_hex" in target:
        try:
            raw = bytes.fromhex(str(target["key_hash_hex"]))
        except ValueError as exc:
            raise SchemaError(f"{context}: bad key_hash_hex") from exc
        if len(raw) != 32:
            raise SchemaError(f"{context}: key_hash_hex must be 32 bytes")
    else:
        raise SchemaError(f"{context}: unrecognized target form {dict(target)!r}")


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file."""
    raw = Path(path).read_text()
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise SchemaError(f"unparseable scenario file: {exc}") from exc
    if data is None:
        raise SchemaError("empty scenario file")
    return parse_scenario(data)
