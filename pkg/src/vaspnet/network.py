"""Trust networks: membership under operating rules, known-good-key
directory gossip with deltas, CRL exchange, and cross-network path-vector
reachability advertisements through peering gateways.

Inside a network, each member publishes its own directory of live customer
certificates and every member keeps a per-publisher view. Across networks,
gateways advertise the union of their network's key hashes with an explicit
network path; loop prevention and route preference follow path-vector
discipline. Advertisements carry key hashes only; names, serials, and
attributes require a routed query answered under disclosure policy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Optional

from . import crypto
from .assertions import (
    AttributeAssertion,
    DisclosurePolicy,
    REQUIRED_TRAVEL_RULE_CORE,
)
from .ca import (
    CertClass,
    Certificate,
    RevocationView,
    validate_certificate,
)
from .crypto import canonical_encode, enc_str, enc_u64, encode_bytes_list

if TYPE_CHECKING:  # pragma: no cover - typing only
    from .vasp import VaspNode


class NetworkError(Exception):
    pass


class RulesVersionMismatch(NetworkError):
    pass


class MembershipDenied(NetworkError):
    pass


@dataclass(frozen=True)
class OperatingRules:
    """Machine-checkable slice of a trust network's operating agreement."""

    rules_version: int = 1
    minimum_certificate_class: CertClass = CertClass.CLASS1
    required_disclosure_policy: DisclosurePolicy = DisclosurePolicy(REQUIRED_TRAVEL_RULE_CORE)
    directory_sync_period: int = 10
    crl_exchange_period: int = 20
    ack_timeout: int = 10

    def __post_init__(self) -> None:
        for name in ("directory_sync_period", "crl_exchange_period", "ack_timeout"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1 tick")


@dataclass(frozen=True)
class MemberRecord:
    vasp_id: str
    vasp_certificate: Certificate
    network_id: str
    joined_at: int
    acked_rules_version: int


@dataclass(frozen=True, order=True)
class DirectoryEntry:
    serial: bytes
    public_key_hash: bytes
    issuer_ca_id: str

    def to_bytes(self) -> bytes:
        return canonical_encode([
            (1, self.serial),
            (2, self.public_key_hash),
            (3, enc_str(self.issuer_ca_id)),
        ])


def _entries_bytes(entries: Iterable[DirectoryEntry]) -> bytes:
    return encode_bytes_list(e.to_bytes() for e in sorted(entries))


@dataclass(frozen=True)
class DirectorySnapshot:
    owner_vasp_id: str
    version: int
    entries: frozenset[DirectoryEntry]
    owner_signature: bytes = b""

    def signed_payload(self) -> bytes:
        return canonical_encode([
            (1, enc_str(self.owner_vasp_id)),
            (2, enc_u64(self.version)),
            (3, _entries_bytes(self.entries)),
        ])

    def to_bytes(self) -> bytes:
        return self.signed_payload() + canonical_encode([(4, self.owner_signature)])


@dataclass(frozen=True)
class DirectoryDelta:
    owner_vasp_id: str
    from_version: int
    to_version: int
    added: frozenset[DirectoryEntry]
    removed: frozenset[DirectoryEntry]
    owner_signature: bytes = b""

    def __post_init__(self) -> None:
        if self.to_version != self.from_version + 1:
            raise ValueError("delta must advance the version by exactly one")
        if self.added & self.removed:
            raise ValueError("added and removed entry sets overlap")

    def signed_payload(self) -> bytes:
        return canonical_encode([
            (1, enc_str(self.owner_vasp_id)),
            (2, enc_u64(self.from_version)),
            (3, enc_u64(self.to_version)),
            (4, _entries_bytes(self.added)),
            (5, _entries_bytes(self.removed)),
        ])


@dataclass(frozen=True)
class DirectoryAnnounce:
    """Periodic anti-entropy heartbeat: the publisher's current version and
    entry digest. A member holding less pulls the full snapshot."""

    owner_vasp_id: str
    version: int
    entries_digest: bytes
    owner_signature: bytes = b""

    def signed_payload(self) -> bytes:
        return canonical_encode([
            (1, enc_str(self.owner_vasp_id)),
            (2, enc_u64(self.version)),
            (3, self.entries_digest),
        ])


class ApplyResult(enum.Enum):
    APPLIED = "applied"
    RESYNC_REQUIRED = "resync-required"


@dataclass
class DirectoryView:
    """One member's view of one publisher's directory."""

    version: int = 0
    entries: set[DirectoryEntry] = field(default_factory=set)

    def install_snapshot(self, snapshot: DirectorySnapshot) -> bool:
        if snapshot.version < self.version:
            return False
        self.version = snapshot.version
        self.entries = set(snapshot.entries)
        return True

    def as_snapshot(self, owner_vasp_id: str) -> DirectorySnapshot:
        return DirectorySnapshot(owner_vasp_id, self.version, frozenset(self.entries))


def apply_delta(view: DirectoryView, delta: DirectoryDelta) -> ApplyResult:
    """Fold an in-order delta into the view; gaps demand a full resync."""
    if delta.from_version != view.version:
        return ApplyResult.RESYNC_REQUIRED
    view.entries = (view.entries - set(delta.removed)) | set(delta.added)
    view.version = delta.to_version
    return ApplyResult.APPLIED


@dataclass(frozen=True)
class PeeringLink:
    gateway_vasp_a: str
    network_a: str
    gateway_vasp_b: str
    network_b: str
    established_at: int = 0

    def __post_init__(self) -> None:
        if self.network_a == self.network_b:
            raise ValueError("peering gateways must sit in different networks")

    def far_side(self, network_id: str) -> tuple[str, str]:
        """(gateway, network) on the opposite side of the given network."""
        if network_id == self.network_a:
            return self.gateway_vasp_b, self.network_b
        if network_id == self.network_b:
            return self.gateway_vasp_a, self.network_a
        raise ValueError(f"link does not touch network {network_id}")

    def near_gateway(self, network_id: str) -> str:
        if network_id == self.network_a:
            return self.gateway_vasp_a
        if network_id == self.network_b:
            return self.gateway_vasp_b
        raise ValueError(f"link does not touch network {network_id}")


@dataclass(frozen=True)
class ReachabilityAdvertisement:
    """Path-vector claim that a set of key hashes is reachable via a VASP."""

    advertised_hashes: frozenset[bytes]
    home_vasp_id: str
    origin_network_id: str
    network_path: tuple[str, ...]
    advertising_gateway_id: str
    gateway_signature: bytes = b""

    def signed_payload(self) -> bytes:
        return canonical_encode([
            (1, encode_bytes_list(sorted(self.advertised_hashes))),
            (2, enc_str(self.home_vasp_id)),
            (3, enc_str(self.origin_network_id)),
            (4, encode_bytes_list(enc_str(n) for n in self.network_path)),
            (5, enc_str(self.advertising_gateway_id)),
        ])


@dataclass(frozen=True)
class RouteEntry:
    origin_network_id: str
    home_vasp_id: str
    hashes: frozenset[bytes]
    network_path: tuple[str, ...]
    via_local_gateway: str
    next_hop_gateway: str

    def preference_key(self) -> tuple[int, tuple[str, ...]]:
        # Shortest path first; equal lengths break on the smaller path tuple.
        return (len(self.network_path), self.network_path)


@dataclass(frozen=True)
class QueryResponse:
    certificate: Certificate
    assertion: Optional[AttributeAssertion]
    responder_vasp_id: str
    responder_certificate: Certificate
    status: str = "ok"


class TrustNetwork:
    """Membership registry, operating rules, peering links, and route table.

    The registry is one logical actor; members interact with each other only
    through simulator messages and synchronous queries.
    """

    def __init__(
        self,
        network_id: str,
        rules: OperatingRules,
        recognized_anchors: dict[str, Certificate],
    ) -> None:
        self.network_id = network_id
        self.rules = rules
        self.recognized_anchors = dict(recognized_anchors)
        self.members: dict[str, MemberRecord] = {}
        self.peering_links: list[PeeringLink] = []
        self.route_table: dict[str, RouteEntry] = {}

    def join_network(
        self,
        vasp_certificate: Certificate,
        rules_version_ack: int,
        now: int,
        revocation: Optional[RevocationView] = None,
    ) -> MemberRecord:
        """Admit a VASP whose certificate validates and whose rules ack is current."""
        if rules_version_ack != self.rules.rules_version:
            raise RulesVersionMismatch(
                f"acked {rules_version_ack}, current {self.rules.rules_version}"
            )
        result = validate_certificate(
            vasp_certificate, self.recognized_anchors, now, revocation
        )
        if not result.ok:
            raise MembershipDenied(f"{result.status.value}: {result.detail}")
        if vasp_certificate.cert_class < self.rules.minimum_certificate_class:
            raise MembershipDenied(
                f"certificate class below {self.rules.minimum_certificate_class.label}"
            )
        record = MemberRecord(
            vasp_id=vasp_certificate.subject_id,
            vasp_certificate=vasp_certificate,
            network_id=self.network_id,
            joined_at=now,
            acked_rules_version=rules_version_ack,
        )
        self.members[record.vasp_id] = record
        return record

    def member_ids(self) -> list[str]:
        return sorted(self.members)

    def gateway_ids(self) -> list[str]:
        return sorted({link.near_gateway(self.network_id) for link in self.peering_links})

    def links_of(self, gateway_vasp_id: str) -> list[PeeringLink]:
        return [
            link
            for link in self.peering_links
            if link.near_gateway(self.network_id) == gateway_vasp_id
        ]

    def find_link_from(self, sender_gateway: str, receiver_gateway: str) -> Optional[PeeringLink]:
        for link in self.peering_links:
            far_gateway, _ = link.far_side(self.network_id)
            if far_gateway == sender_gateway and link.near_gateway(self.network_id) == receiver_gateway:
                return link
        return None

    def dump_route_lines(self) -> list[str]:
        lines = []
        for origin in sorted(self.route_table):
            entry = self.route_table[origin]
            for key_hash in sorted(entry.hashes):
                lines.append(
                    f"{key_hash.hex()[:16]},{entry.home_vasp_id},{'>'.join(entry.network_path)}"
                )
        return lines


def build_advertisement(
    network: TrustNetwork,
    gateway: "VaspNode",
) -> ReachabilityAdvertisement:
    """Summarize the network's directory as seen from a gateway member.

    The advertised set is the union of the member snapshots the gateway
    holds; the gateway itself is the home VASP through which the hashes are
    reachable.
    """
    hashes: set[bytes] = set()
    for member_id in network.member_ids():
        view = gateway.directory_views.get(member_id)
        if view is not None:
            hashes.update(entry.public_key_hash for entry in view.entries)
    unsigned = ReachabilityAdvertisement(
        advertised_hashes=frozenset(hashes),
        home_vasp_id=gateway.vasp_id,
        origin_network_id=network.network_id,
        network_path=(network.network_id,),
        advertising_gateway_id=gateway.vasp_id,
    )
    signature = gateway.sign_bytes(unsigned.signed_payload())
    return replace(unsigned, gateway_signature=signature)


def process_advertisement(
    network: TrustNetwork,
    receiving_gateway: "VaspNode",
    adv: ReachabilityAdvertisement,
    sender_gateway_id: str,
    env,
) -> tuple[str, str]:
    """Install or drop an incoming advertisement; returns (verdict, reason).

    On install the advertisement is re-signed with the local network appended
    to its path and forwarded over the network's other peering links.
    """
    link = network.find_link_from(sender_gateway_id, receiving_gateway.vasp_id)
    if link is None:
        return "drop", "not-a-gateway"
    if not adv.network_path or adv.network_path[0] != adv.origin_network_id:
        return "drop", "malformed-path"
    if adv.advertising_gateway_id != sender_gateway_id:
        return "drop", "not-a-gateway"
    if len(set(adv.network_path)) != len(adv.network_path):
        return "drop", "loop"
    if network.network_id in adv.network_path:
        return "drop", "loop"
    sender = env.node(sender_gateway_id)
    sender_check = validate_certificate(
        sender.certificate, receiving_gateway.trust_anchors, env.now, receiving_gateway.revocation
    )
    if not sender_check.ok or not crypto.verify(
        sender.certificate.subject_public_key, adv.signed_payload(), adv.gateway_signature
    ):
        return "drop", "bad-signature"

    candidate = RouteEntry(
        origin_network_id=adv.origin_network_id,
        home_vasp_id=adv.home_vasp_id,
        hashes=adv.advertised_hashes,
        network_path=adv.network_path,
        via_local_gateway=receiving_gateway.vasp_id,
        next_hop_gateway=sender_gateway_id,
    )
    existing = network.route_table.get(adv.origin_network_id)
    if existing is not None:
        if candidate.preference_key() > existing.preference_key():
            return "drop", "worse-path"
        if (
            candidate.preference_key() == existing.preference_key()
            and candidate.hashes == existing.hashes
            and candidate.next_hop_gateway == existing.next_hop_gateway
        ):
            return "drop", "duplicate"
    network.route_table[adv.origin_network_id] = candidate

    extended_path = adv.network_path + (network.network_id,)
    for out_link in network.peering_links:
        far_gateway, far_network = out_link.far_side(network.network_id)
        if out_link == link or far_network in extended_path:
            continue
        local_gateway = env.node(out_link.near_gateway(network.network_id))
        forwarded = ReachabilityAdvertisement(
            advertised_hashes=adv.advertised_hashes,
            home_vasp_id=adv.home_vasp_id,
            origin_network_id=adv.origin_network_id,
            network_path=extended_path,
            advertising_gateway_id=local_gateway.vasp_id,
        )
        signed = replace(
            forwarded, gateway_signature=local_gateway.sign_bytes(forwarded.signed_payload())
        )
        env.send(local_gateway.vasp_id, far_gateway, "reach_adv", signed)
    return "accept", ""


def query_certificate(
    requester: "VaspNode",
    key_hash: bytes,
    env,
) -> Optional[QueryResponse]:
    """Consult the requester's directory views and query the owning member.

    Returns the owner's response (ok or revoked-flagged), or None when no
    view holds the hash or the owner is unreachable; an unresponsive owner is
    logged as a directory inconsistency. A revoked response marks the view
    entry stale.
    """
    result: Optional[QueryResponse] = None
    for owner_id in sorted(requester.directory_views):
        if owner_id == requester.vasp_id:
            continue
        view = requester.directory_views[owner_id]
        if not any(e.public_key_hash == key_hash for e in view.entries):
            continue
        if not env.link_ok(requester.vasp_id, owner_id):
            continue
        owner = env.node(owner_id)
        response = owner.respond_certificate_query(requester.vasp_id, key_hash, env.now)
        if response is None:
            env.log(requester.vasp_id, "directory_inconsistency", owner=owner_id)
            continue
        if response.status == "revoked":
            view.entries = {e for e in view.entries if e.public_key_hash != key_hash}
            env.log(requester.vasp_id, "directory_stale_entry", owner=owner_id)
            result = result or response
            continue
        return response
    return result


def exchange_crl(member_a: "VaspNode", member_b: "VaspNode") -> None:
    """Pairwise CRL exchange: both parties end at the union of their views,
    per issuer at the highest CRL number seen."""
    member_a.revocation.merge_view(member_b.revocation)
    member_b.revocation.merge_view(member_a.revocation)
    member_a.prune_directory_views()
    member_b.prune_directory_views()


def route_cross_network_query(
    requester: "VaspNode",
    key_hash: bytes,
    env,
) -> tuple[Optional[QueryResponse], list[str]]:
    """Forward a certificate query along installed gateway routes.

    Returns the response (or None) and the hop list actually walked; a dead
    link or gateway mid-path yields NotFound with the partial path.
    """
    candidates: list[tuple[tuple[int, str], TrustNetwork, RouteEntry]] = []
    for network in requester.networks_sorted():
        for origin in sorted(network.route_table):
            entry = network.route_table[origin]
            if key_hash in entry.hashes:
                candidates.append(((len(entry.network_path), origin), network, entry))
    if not candidates:
        return None, [requester.vasp_id]
    candidates.sort(key=lambda item: item[0])
    _, network, entry = candidates[0]

    hops = [requester.vasp_id]
    visited = {network.network_id}
    current_network = network
    current_entry = entry
    while True:
        via = current_entry.via_local_gateway
        nxt = current_entry.next_hop_gateway
        if hops[-1] != via:
            hops.append(via)
        if not env.link_ok(via, nxt):
            env.log(requester.vasp_id, "route_query_failed",
                    reason="link-down", partial_path=">".join(hops))
            return None, hops
        hops.append(nxt)
        next_node = env.node(nxt)
        _, far_network_id = _link_far_side(current_network, via, nxt)
        if far_network_id == current_entry.origin_network_id:
            response, owner_hops = _resolve_in_origin_network(next_node, key_hash, env)
            hops.extend(owner_hops)
            return response, hops
        next_network = next_node.membership_network(far_network_id)
        if next_network is None or far_network_id in visited:
            env.log(requester.vasp_id, "route_query_failed",
                    reason="routing-loop", partial_path=">".join(hops))
            return None, hops
        visited.add(far_network_id)
        next_entry = next_network.route_table.get(current_entry.origin_network_id)
        if next_entry is None:
            env.log(requester.vasp_id, "route_query_failed",
                    reason="no-onward-route", partial_path=">".join(hops))
            return None, hops
        current_network = next_network
        current_entry = next_entry


def _link_far_side(network: TrustNetwork, near_gateway: str, far_gateway: str) -> tuple[str, str]:
    for link in network.links_of(near_gateway):
        candidate_gateway, candidate_network = link.far_side(network.network_id)
        if candidate_gateway == far_gateway:
            return candidate_gateway, candidate_network
    raise NetworkError(f"no link between {near_gateway} and {far_gateway}")


def _resolve_in_origin_network(
    gateway: "VaspNode",
    key_hash: bytes,
    env,
) -> tuple[Optional[QueryResponse], list[str]]:
    owner_id = gateway.find_directory_owner(key_hash)
    if owner_id is None:
        return None, []
    if owner_id == gateway.vasp_id:
        return gateway.respond_certificate_query(gateway.vasp_id, key_hash, env.now), []
    if not env.link_ok(gateway.vasp_id, owner_id):
        return None, [owner_id]
    owner = env.node(owner_id)
    return owner.respond_certificate_query(gateway.vasp_id, key_hash, env.now), [owner_id]
