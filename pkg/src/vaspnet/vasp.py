"""The VASP state machine.

A node keeps customer accounts under three custody models, resolves
beneficiaries through its CA, its trust networks, and cross-network routes,
runs the pre-transfer validation pipeline, exchanges off-chain transfer
notices and acks, executes on-chain per custody model (including commingled
batches), and supports reconciliation and travel-rule audit.

Each node is one logical actor: the harness delivers one message at a time
and all handlers are deterministic in (state, message, tick).
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

from . import crypto
from .assertions import (
    AttributeAssertion,
    DisclosurePolicy,
    TRAVEL_RULE_POLICY,
    filter_attributes,
    issue_assertion,
    verify_assertion,
)
from .ca import (
    Certificate,
    CertificateAuthority,
    CertClass,
    CertStatus,
    Crl,
    DEFAULT_PROFILE,
    DeltaCrl,
    RevocationView,
    ValidationResult,
    ValidationStatus,
    validate_certificate,
)
from .chain import ChainTransaction, build_transaction
from .crypto import KeyPair, canonical_encode, digest, enc_str, enc_u64
from .network import (
    ApplyResult,
    DirectoryDelta,
    DirectoryEntry,
    DirectorySnapshot,
    DirectoryView,
    QueryResponse,
    ReachabilityAdvertisement,
    TrustNetwork,
    apply_delta,
    process_advertisement,
    route_cross_network_query,
)

NOTICE_ID_LEN = 16
RECORD_ID_LEN = 16

DEFAULT_ACK_TIMEOUT = 10


class VaspError(Exception):
    pass


class ModelKeyMismatch(VaspError):
    pass


class NoCustomerKey(VaspError):
    pass


class KeyUnavailable(VaspError):
    pass


class MixedDestination(VaspError):
    pass


class CustodyModel(enum.Enum):
    MEDIATED = "mediated"
    KEY_CUSTODY = "key-custody"
    COMMINGLED = "commingled"


@dataclass(frozen=True)
class KeyOperatorEvidence:
    """Evidence that this VASP legally operates the customer's keys."""

    operator_vasp_id: str
    custody_agreement_id: str
    since_tick: int


@dataclass
class Account:
    account_id: str
    subject_id: str
    attributes: dict[str, str]
    custody_model: CustodyModel
    customer_public_key: Optional[bytes] = None
    custodied_private_key: Optional[bytes] = None
    certificate_serial: Optional[bytes] = None
    certificate: Optional[Certificate] = None
    key_ownership_evidence: Optional[bytes] = None
    key_operator_evidence: Optional[KeyOperatorEvidence] = None

    def check_invariants(self) -> None:
        if self.custody_model is CustodyModel.MEDIATED:
            if self.customer_public_key is None or self.custodied_private_key is not None:
                raise ModelKeyMismatch("mediated accounts hold the public key only")
        elif self.custody_model is CustodyModel.KEY_CUSTODY:
            if self.customer_public_key is None or self.custodied_private_key is None:
                raise ModelKeyMismatch("key-custody accounts hold both keys")
            if self.key_operator_evidence is None:
                raise ModelKeyMismatch("key-custody accounts carry operator evidence")
        else:
            if self.customer_public_key is not None or self.custodied_private_key is not None:
                raise ModelKeyMismatch("commingled accounts store no customer keys")


class SuspectList:
    """Blocked public-key hashes and account ids; version only grows."""

    def __init__(self) -> None:
        self._blocked: set[bytes | str] = set()
        self.version = 0

    def add(self, ref: bytes | str) -> None:
        self._blocked.add(ref)
        self.version += 1

    def contains(self, ref: bytes | str) -> bool:
        return ref in self._blocked

    def __len__(self) -> int:
        return len(self._blocked)


@dataclass(frozen=True)
class BeneficiaryRef:
    """How a notice names one beneficiary: key hash plus optional account id."""

    public_key_hash: bytes
    account_id: Optional[str] = None

    def to_bytes(self) -> bytes:
        fields: list[tuple[int, bytes]] = [(1, self.public_key_hash)]
        if self.account_id is not None:
            fields.append((2, enc_str(self.account_id)))
        return canonical_encode(fields)


@dataclass(frozen=True)
class TransferTarget:
    """Pre-resolution reference to a beneficiary."""

    kind: str
    public_key: Optional[bytes] = None
    key_hash: Optional[bytes] = None
    vasp_id: Optional[str] = None
    account_id: Optional[str] = None

    @classmethod
    def from_public_key(cls, public_key: bytes) -> "TransferTarget":
        return cls(kind="public_key", public_key=public_key, key_hash=digest(public_key))

    @classmethod
    def from_key_hash(cls, key_hash: bytes) -> "TransferTarget":
        return cls(kind="key_hash", key_hash=key_hash)

    @classmethod
    def from_account(cls, vasp_id: str, account_id: str) -> "TransferTarget":
        return cls(kind="account", vasp_id=vasp_id, account_id=account_id)


@dataclass(frozen=True)
class TransferNotice:
    notice_id: bytes
    originator_vasp_id: str
    beneficiary_vasp_id: str
    originator_assertion: AttributeAssertion
    beneficiary_ref: BeneficiaryRef
    asset_type: str
    amount: int
    execution_tick: int
    intended_chain_tx_binding: bytes
    batch_entries: Optional[tuple[tuple[BeneficiaryRef, int], ...]]
    originator_vasp_signature: bytes = b""

    def __post_init__(self) -> None:
        if self.batch_entries is not None:
            total = sum(amount for _, amount in self.batch_entries)
            if total != self.amount:
                raise ValueError("batch entry amounts must sum to the notice amount")

    def signed_payload(self) -> bytes:
        fields: list[tuple[int, bytes]] = [
            (1, self.notice_id),
            (2, enc_str(self.originator_vasp_id)),
            (3, enc_str(self.beneficiary_vasp_id)),
            (4, self.originator_assertion.to_bytes()),
            (5, self.beneficiary_ref.to_bytes()),
            (6, enc_str(self.asset_type)),
            (7, enc_u64(self.amount)),
            (8, enc_u64(self.execution_tick)),
            (9, self.intended_chain_tx_binding),
        ]
        if self.batch_entries is not None:
            encoded = crypto.encode_bytes_list(
                ref.to_bytes() + enc_u64(amount) for ref, amount in self.batch_entries
            )
            fields.append((10, encoded))
        return canonical_encode(fields)

    def all_refs(self) -> tuple[BeneficiaryRef, ...]:
        if self.batch_entries is not None:
            return tuple(ref for ref, _ in self.batch_entries)
        return (self.beneficiary_ref,)


class AckDecision(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class RejectReason(enum.Enum):
    UNKNOWN_BENEFICIARY = "UnknownBeneficiary"
    SUSPECT_PARTY = "SuspectParty"
    CERT_INVALID = "CertInvalid"
    POLICY_REFUSAL = "PolicyRefusal"


@dataclass(frozen=True)
class TransferAck:
    notice_id: bytes
    decision: AckDecision
    reject_reason: Optional[RejectReason]
    beneficiary_assertion: Optional[AttributeAssertion]
    beneficiary_vasp_signature: bytes = b""

    def signed_payload(self) -> bytes:
        fields: list[tuple[int, bytes]] = [
            (1, self.notice_id),
            (2, enc_str(self.decision.value)),
        ]
        if self.reject_reason is not None:
            fields.append((3, enc_str(self.reject_reason.value)))
        if self.beneficiary_assertion is not None:
            fields.append((4, self.beneficiary_assertion.to_bytes()))
        return canonical_encode(fields)


class RecordRole(enum.Enum):
    ORIGINATOR_SIDE = "originator"
    BENEFICIARY_SIDE = "beneficiary"


class RecordStatus(enum.Enum):
    PENDING_ACK = "pending-ack"
    PENDING_CHAIN = "pending-chain"
    CONFIRMED = "confirmed"
    FAILED = "failed"


_ALLOWED_TRANSITIONS = {
    RecordStatus.PENDING_ACK: {RecordStatus.PENDING_CHAIN, RecordStatus.FAILED},
    RecordStatus.PENDING_CHAIN: {RecordStatus.CONFIRMED, RecordStatus.FAILED},
    RecordStatus.CONFIRMED: set(),
    RecordStatus.FAILED: set(),
}


@dataclass
class TravelRuleRecord:
    """Append-only compliance record for one transfer, per side."""

    record_id: bytes
    role: RecordRole
    notice: TransferNotice
    ack: Optional[TransferAck]
    chain_tx_id: Optional[bytes]
    status: RecordStatus
    failure_reason: Optional[str]
    created_at: int
    updated_at: int
    originator_account_ids: tuple[str, ...] = ()
    beneficiary_account_ids: tuple[str, ...] = ()

    def advance(self, status: RecordStatus, now: int, failure_reason: Optional[str] = None) -> None:
        if status not in _ALLOWED_TRANSITIONS[self.status]:
            raise VaspError(f"illegal record transition {self.status} -> {status}")
        self.status = status
        self.failure_reason = failure_reason
        self.updated_at = now


class DenialCode(enum.Enum):
    NO_ORIGINATOR_CERT = "NoOriginatorCert"
    BENEFICIARY_UNRESOLVED = "BeneficiaryUnresolved"
    CERT_INVALID = "CertInvalid"
    SUSPECT_PARTY = "SuspectParty"
    ACK_REJECTED = "AckRejected"
    CHANNEL_TIMEOUT = "ChannelTimeout"
    CHAIN_REJECTED = "ChainRejected"


@dataclass(frozen=True)
class DenialReason:
    code: DenialCode
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.code.value}({self.detail})" if self.detail else self.code.value


class OutcomeStatus(enum.Enum):
    PENDING = "pending"
    BROADCAST = "broadcast"
    DENIED = "denied"


@dataclass
class TransferOutcome:
    """Resolves over simulation time: pending until acked, timed out, or denied."""

    status: OutcomeStatus = OutcomeStatus.PENDING
    denial: Optional[DenialReason] = None
    chain_tx_id: Optional[bytes] = None
    record_id: Optional[bytes] = None

    @property
    def resolved(self) -> bool:
        return self.status is not OutcomeStatus.PENDING


@dataclass(frozen=True)
class ResolvedBeneficiary:
    certificate: Certificate
    home_vasp_id: Optional[str]
    home_vasp_certificate: Optional[Certificate]
    resolution_path: tuple[str, ...]
    account_id: Optional[str] = None
    custody_model: Optional[str] = None
    attributes: Optional[Mapping[str, str]] = None
    assertion: Optional[AttributeAssertion] = None
    revoked: bool = False


@dataclass
class PendingTransfer:
    notice: TransferNotice
    outcome: TransferOutcome
    record_id: bytes
    prepared_tx: ChainTransaction
    resolved: ResolvedBeneficiary
    deadline: int
    batch: bool = False


@dataclass(frozen=True)
class ReconciliationReport:
    matched: int
    orphan_chain_txs: tuple[bytes, ...]
    unconfirmed_records: tuple[bytes, ...]

    def report_lines(self) -> list[str]:
        lines = [f"reconcile matched={self.matched} orphans={len(self.orphan_chain_txs)} "
                 f"unconfirmed={len(self.unconfirmed_records)}"]
        lines += [f"orphan_tx={tx.hex()}" for tx in self.orphan_chain_txs]
        lines += [f"unconfirmed_record={rid.hex()}" for rid in self.unconfirmed_records]
        return lines


@dataclass(frozen=True)
class AuditReport:
    records_checked: int
    violations: tuple[tuple[str, str], ...]

    def report_lines(self) -> list[str]:
        lines = [f"audit records={self.records_checked} violations={len(self.violations)}"]
        lines += [f"violation record={rid} missing={what}" for rid, what in self.violations]
        return lines


class VaspNode:
    def __init__(
        self,
        vasp_id: str,
        keypair: KeyPair,
        ca: CertificateAuthority,
        rng: random.Random,
        env,
        chain_id: str = "simchain",
        ack_timeout: int = DEFAULT_ACK_TIMEOUT,
        disclosure_policy: DisclosurePolicy = TRAVEL_RULE_POLICY,
    ) -> None:
        self.vasp_id = vasp_id
        self._keypair = keypair
        self.ca = ca
        self._rng = rng
        self.env = env
        self.chain_id = chain_id
        self.ack_timeout = ack_timeout
        self.disclosure_policy = disclosure_policy

        self.certificate: Optional[Certificate] = None
        self.accounts: dict[str, Account] = {}
        self._wallets: dict[str, KeyPair] = {}
        self._accounts_by_key_hash: dict[bytes, str] = {}
        self.suspect_list = SuspectList()
        self.revocation = RevocationView()
        self.trust_anchors: dict[str, Certificate] = {}
        self.memberships: dict[str, TrustNetwork] = {}
        self.directory_views: dict[str, DirectoryView] = {}
        self.records: dict[bytes, TravelRuleRecord] = {}
        self._records_by_binding: dict[bytes, list[bytes]] = {}
        self._pending: dict[bytes, PendingTransfer] = {}
        self._handled_notices: set[bytes] = set()
        self._publish_version = 0
        self._last_snapshot: Optional[DirectorySnapshot] = None

    # -- identity and membership --------------------------------------------

    @property
    def public_key(self) -> bytes:
        return self._keypair.public_key

    @property
    def public_key_hash(self) -> bytes:
        return self._keypair.public_key_hash

    def sign_bytes(self, payload: bytes) -> bytes:
        return crypto.sign(self._keypair, payload)

    def enroll_vasp_certificate(
        self,
        attributes: Mapping[str, str],
        now: int,
        validity_ticks: int,
        requested_class: CertClass = CertClass.CLASS3,
    ) -> Certificate:
        """Obtain this VASP's own certificate from the affiliated CA."""
        registration = self.ca.register_subject(self.vasp_id, attributes, requested_class, now)
        cert = self.ca.issue_certificate(
            registration, self._keypair.public_key, DEFAULT_PROFILE,
            now, now + validity_ticks, now,
        )
        self.certificate = cert
        if self.ca.root_certificate is not None:
            self.trust_anchors[self.ca.ca_id] = self.ca.root_certificate
        return cert

    def join(self, network: TrustNetwork, now: int):
        if self.certificate is None:
            raise VaspError("VASP certificate required before joining a network")
        record = network.join_network(
            self.certificate, network.rules.rules_version, now, self.revocation
        )
        self.memberships[network.network_id] = network
        self.trust_anchors.update(network.recognized_anchors)
        self.ack_timeout = network.rules.ack_timeout
        return record

    def networks_sorted(self) -> list[TrustNetwork]:
        return [self.memberships[nid] for nid in sorted(self.memberships)]

    def membership_network(self, network_id: str) -> Optional[TrustNetwork]:
        return self.memberships.get(network_id)

    def co_member_ids(self) -> list[str]:
        ids: set[str] = set()
        for network in self.memberships.values():
            ids.update(network.members)
        ids.discard(self.vasp_id)
        return sorted(ids)

    def member_certificate(self, vasp_id: str) -> Optional[Certificate]:
        for network in self.networks_sorted():
            record = network.members.get(vasp_id)
            if record is not None:
                return record.vasp_certificate
        return None

    def _peer_certificate(self, vasp_id: str) -> Optional[Certificate]:
        """Peer VASP certificate: from shared membership, else fetched over the
        pair-wise channel (certificate exchange at channel setup)."""
        if vasp_id == self.vasp_id:
            return self.certificate
        cert = self.member_certificate(vasp_id)
        if cert is not None:
            return cert
        if self.env.link_ok(self.vasp_id, vasp_id):
            peer = self.env.node(vasp_id)
            if peer is not None:
                return peer.certificate
        return None

    def _validator(self, chain_id: Optional[str] = None):
        def check(cert: Certificate) -> ValidationResult:
            return validate_certificate(
                cert, self.trust_anchors, self.env.now, self.revocation, chain_id
            )
        return check

    def _fresh_id(self, length: int = NOTICE_ID_LEN) -> bytes:
        return self._rng.getrandbits(length * 8).to_bytes(length, "big")

    def vasp_attributes(self) -> dict[str, str]:
        """Identity attributes this VASP asserts about itself (pool transfers)."""
        return {
            "name": self.vasp_id,
            "vasp_id": self.vasp_id,
            "account_id": f"{self.vasp_id}/pool",
            "public_key_hash": self.public_key_hash.hex(),
            "custody_model": CustodyModel.COMMINGLED.value,
        }

    # -- accounts -------------------------------------------------------------

    def open_account(
        self,
        subject_id: str,
        attributes: Mapping[str, str],
        custody_model: CustodyModel,
        customer_public_key: Optional[bytes] = None,
        customer_wallet: Optional[KeyPair] = None,
        account_id: Optional[str] = None,
        now: int = 0,
    ) -> Account:
        """Open an account with the key arrangement its custody model demands.

        Mediated accounts carry the customer's public key (the wallet stays
        with the customer; in simulation it is co-located with this node).
        Key-custody accounts get a VASP-generated keypair held in custody.
        Commingled accounts store no customer keys at all.
        """
        if customer_wallet is not None:
            if customer_public_key is not None and customer_public_key != customer_wallet.public_key:
                raise ModelKeyMismatch("wallet and public key disagree")
            customer_public_key = customer_wallet.public_key
        account_id = account_id or f"acct-{self._fresh_id(8).hex()}"
        if account_id in self.accounts:
            raise VaspError(f"account {account_id} already exists")

        custodied_private: Optional[bytes] = None
        operator_evidence: Optional[KeyOperatorEvidence] = None
        if custody_model is CustodyModel.MEDIATED:
            if customer_public_key is None:
                raise ModelKeyMismatch("mediated accounts require the customer public key")
        elif custody_model is CustodyModel.KEY_CUSTODY:
            if customer_public_key is not None:
                raise ModelKeyMismatch("key-custody keys are generated by the VASP")
            generated = crypto.generate_keypair(self._rng.randbytes(32))
            customer_public_key = generated.public_key
            custodied_private = generated.private_key
            operator_evidence = KeyOperatorEvidence(
                operator_vasp_id=self.vasp_id,
                custody_agreement_id=f"custody/{self.vasp_id}/{account_id}",
                since_tick=now,
            )
        else:
            if customer_public_key is not None:
                raise ModelKeyMismatch("commingled accounts must not supply customer keys")

        merged = dict(attributes)
        merged.setdefault("account_id", account_id)
        merged.setdefault("vasp_id", self.vasp_id)
        merged.setdefault("custody_model", custody_model.value)
        # The on-chain key for the account: the customer's, or the VASP's own
        # for commingled pools.
        onchain_key = customer_public_key or self._keypair.public_key
        merged.setdefault("public_key_hash", digest(onchain_key).hex())

        account = Account(
            account_id=account_id,
            subject_id=subject_id,
            attributes=merged,
            custody_model=custody_model,
            customer_public_key=customer_public_key,
            custodied_private_key=custodied_private,
            key_operator_evidence=operator_evidence,
        )
        account.check_invariants()
        self.accounts[account_id] = account
        if customer_public_key is not None:
            self._accounts_by_key_hash[digest(customer_public_key)] = account_id
        if customer_wallet is not None:
            self._wallets[account_id] = customer_wallet
        self.env.log(self.vasp_id, "account_opened",
                     account=account_id, model=custody_model.value)
        return account

    def enroll_customer_certificate(
        self,
        account_id: str,
        requested_class: CertClass,
        now: int,
        validity_ticks: int = 10_000,
    ) -> Certificate:
        """Register and certify the account's key at the affiliated CA."""
        account = self.accounts[account_id]
        if account.customer_public_key is None:
            raise NoCustomerKey(f"{account_id} is commingled; no customer key to certify")
        registration = self.ca.register_subject(
            account.subject_id, account.attributes, requested_class, now
        )
        cert = self.ca.issue_certificate(
            registration, account.customer_public_key, DEFAULT_PROFILE,
            now, now + validity_ticks, now,
        )
        account.certificate_serial = cert.serial
        account.certificate = cert
        account.key_ownership_evidence = cert.fingerprint()
        self.env.log(self.vasp_id, "customer_enrolled",
                     account=account_id, serial=cert.serial_hex)
        return cert

    # -- suspect screening ----------------------------------------------------

    def screen_suspect(self, party_refs: Iterable[bytes | str]) -> bool:
        """True iff none of the given refs is on the suspect list."""
        return not any(self.suspect_list.contains(ref) for ref in party_refs)

    # -- directory gossip -----------------------------------------------------

    def directory_entries(self, now: int) -> frozenset[DirectoryEntry]:
        """Current live customer certificate entries (revoked/expired excluded)."""
        entries = []
        for account_id in sorted(self.accounts):
            account = self.accounts[account_id]
            cert = account.certificate
            if cert is None or account.customer_public_key is None:
                continue
            if self.revocation.is_revoked(cert.issuer_id, cert.serial):
                continue
            if now > cert.validity_not_after:
                continue
            entries.append(DirectoryEntry(
                serial=cert.serial,
                public_key_hash=digest(account.customer_public_key),
                issuer_ca_id=cert.issuer_id,
            ))
        return frozenset(entries)

    def publish_directory(self, now: int) -> DirectorySnapshot:
        """Publish the next snapshot version and broadcast the delta to members."""
        entries = self.directory_entries(now)
        previous = self._last_snapshot.entries if self._last_snapshot else frozenset()
        self._publish_version += 1
        snapshot = DirectorySnapshot(self.vasp_id, self._publish_version, entries)
        snapshot = replace(snapshot, owner_signature=self.sign_bytes(snapshot.signed_payload()))
        delta = DirectoryDelta(
            owner_vasp_id=self.vasp_id,
            from_version=self._publish_version - 1,
            to_version=self._publish_version,
            added=frozenset(entries - previous),
            removed=frozenset(previous - entries),
        )
        delta = replace(delta, owner_signature=self.sign_bytes(delta.signed_payload()))
        self._last_snapshot = snapshot
        own_view = self.directory_views.setdefault(self.vasp_id, DirectoryView())
        own_view.install_snapshot(snapshot)
        for member_id in self.co_member_ids():
            self.env.send(self.vasp_id, member_id, "dir_delta", delta)
        self.env.log(self.vasp_id, "directory_published",
                     version=self._publish_version, entries=len(entries))
        return snapshot

    def on_dir_delta(self, delta: DirectoryDelta, src: str) -> None:
        cert = self.member_certificate(delta.owner_vasp_id)
        if cert is None or not crypto.verify(
            cert.subject_public_key, delta.signed_payload(), delta.owner_signature
        ):
            self.env.log(self.vasp_id, "gossip_dropped", owner=delta.owner_vasp_id,
                         reason="bad-signature")
            return
        view = self.directory_views.setdefault(delta.owner_vasp_id, DirectoryView())
        result = apply_delta(view, delta)
        if result is ApplyResult.RESYNC_REQUIRED:
            self.env.log(self.vasp_id, "directory_resync", owner=delta.owner_vasp_id,
                         held=view.version, offered=delta.to_version)
            self.env.send(self.vasp_id, delta.owner_vasp_id, "dir_pull", None)
            return
        self.prune_directory_views()
        self.env.log(self.vasp_id, "directory_applied", owner=delta.owner_vasp_id,
                     version=view.version)

    def on_dir_pull(self, src: str) -> None:
        if self._last_snapshot is not None:
            self.env.send(self.vasp_id, src, "dir_snapshot", self._last_snapshot)

    def announce_directory(self, now: int) -> None:
        """Heartbeat the current directory version to all co-members."""
        if self._last_snapshot is None:
            return
        from .network import DirectoryAnnounce, _entries_bytes

        unsigned = DirectoryAnnounce(
            owner_vasp_id=self.vasp_id,
            version=self._last_snapshot.version,
            entries_digest=digest(_entries_bytes(self._last_snapshot.entries)),
        )
        announce = replace(unsigned,
                           owner_signature=self.sign_bytes(unsigned.signed_payload()))
        for member_id in self.co_member_ids():
            self.env.send(self.vasp_id, member_id, "dir_announce", announce)

    def on_dir_announce(self, announce, src: str) -> None:
        from .network import _entries_bytes

        cert = self.member_certificate(announce.owner_vasp_id)
        if cert is None or not crypto.verify(
            cert.subject_public_key, announce.signed_payload(), announce.owner_signature
        ):
            return
        view = self.directory_views.get(announce.owner_vasp_id)
        held_version = view.version if view is not None else 0
        held_digest = (
            digest(_entries_bytes(view.entries)) if view is not None else b""
        )
        if held_version < announce.version or (
            held_version == announce.version and held_digest != announce.entries_digest
        ):
            self.env.send(self.vasp_id, announce.owner_vasp_id, "dir_pull", None)

    def on_dir_snapshot(self, snapshot: DirectorySnapshot, src: str) -> None:
        cert = self.member_certificate(snapshot.owner_vasp_id)
        if cert is None or not crypto.verify(
            cert.subject_public_key, snapshot.signed_payload(), snapshot.owner_signature
        ):
            self.env.log(self.vasp_id, "gossip_dropped", owner=snapshot.owner_vasp_id,
                         reason="bad-signature")
            return
        view = self.directory_views.setdefault(snapshot.owner_vasp_id, DirectoryView())
        if view.install_snapshot(snapshot):
            self.prune_directory_views()
            self.env.log(self.vasp_id, "directory_applied", owner=snapshot.owner_vasp_id,
                         version=view.version)

    def prune_directory_views(self) -> None:
        for view in self.directory_views.values():
            view.entries = {
                entry for entry in view.entries
                if not self.revocation.is_revoked(entry.issuer_ca_id, entry.serial)
            }

    def find_directory_owner(self, key_hash: bytes) -> Optional[str]:
        for owner_id in sorted(self.directory_views):
            if any(e.public_key_hash == key_hash for e in self.directory_views[owner_id].entries):
                return owner_id
        return None

    # -- CRL exchange -----------------------------------------------------------

    def ingest_crls(self, crls: Sequence[Crl | DeltaCrl], broadcast: bool = False) -> None:
        """Merge issuer CRLs into the local view; optionally forward to members."""
        applied = []
        for crl in crls:
            anchor = self.trust_anchors.get(crl.issuer_id)
            if anchor is None or not crypto.verify(
                anchor.subject_public_key, crl.signed_payload(),
                crl.signature,
            ):
                self.env.log(self.vasp_id, "crl_dropped", issuer=crl.issuer_id,
                             reason="bad-signature")
                continue
            if isinstance(crl, DeltaCrl):
                if self.revocation.merge_delta(crl):
                    applied.append(crl)
            elif self.revocation.merge_crl(crl):
                applied.append(crl)
        if applied:
            self.prune_directory_views()
            for crl in applied:
                self.env.log(self.vasp_id, "crl_merged", issuer=crl.issuer_id,
                             number=crl.crl_number)
        if broadcast and applied:
            for member_id in self.co_member_ids():
                self.env.send(self.vasp_id, member_id, "crl_update", list(applied))

    def on_crl_update(self, crls: Sequence[Crl | DeltaCrl], src: str) -> None:
        self.ingest_crls(crls, broadcast=False)

    # -- queries (synchronous, pair-wise channels) -------------------------------

    def respond_certificate_query(
        self, requester_id: str, key_hash: bytes, now: int
    ) -> Optional[QueryResponse]:
        account_id = self._accounts_by_key_hash.get(key_hash)
        if account_id is None or self.certificate is None:
            return None
        account = self.accounts[account_id]
        cert = account.certificate
        if cert is None:
            return None
        check = self._validator()(cert)
        if check.status is ValidationStatus.REVOKED:
            return QueryResponse(
                certificate=cert, assertion=None, responder_vasp_id=self.vasp_id,
                responder_certificate=self.certificate, status="revoked",
            )
        if not check.ok:
            return None
        assertion = self._customer_assertion(account, now)
        return QueryResponse(
            certificate=cert, assertion=assertion, responder_vasp_id=self.vasp_id,
            responder_certificate=self.certificate, status="ok",
        )

    def respond_account_query(
        self, requester_id: str, account_id: str, now: int
    ) -> Optional[QueryResponse]:
        account = self.accounts.get(account_id)
        if account is None or self.certificate is None:
            return None
        if account.custody_model is CustodyModel.COMMINGLED:
            cert = self.certificate
        else:
            cert = account.certificate
            if cert is None:
                return None
            check = self._validator()(cert)
            if check.status is ValidationStatus.REVOKED:
                return QueryResponse(
                    certificate=cert, assertion=None, responder_vasp_id=self.vasp_id,
                    responder_certificate=self.certificate, status="revoked",
                )
            if not check.ok:
                return None
        assertion = self._customer_assertion(account, now)
        return QueryResponse(
            certificate=cert, assertion=assertion, responder_vasp_id=self.vasp_id,
            responder_certificate=self.certificate, status="ok",
        )

    def _customer_assertion(self, account: Account, now: int) -> Optional[AttributeAssertion]:
        subject_cert = (
            self.certificate
            if account.custody_model is CustodyModel.COMMINGLED
            else account.certificate
        )
        if subject_cert is None:
            return None
        try:
            full = issue_assertion(
                self._keypair, self.vasp_id, account.subject_id, subject_cert,
                account.attributes, account.attributes, self._validator(),
                self._fresh_id(), now,
            )
            return filter_attributes(
                full, self.disclosure_policy, self._keypair, self.vasp_id,
                self._fresh_id(), now,
            )
        except Exception:
            return None

    # -- beneficiary resolution ---------------------------------------------------

    def resolve_beneficiary(self, target: TransferTarget, now: int) -> Optional[ResolvedBeneficiary]:
        """Resolve in fixed order: local cache, affiliated CA, trust-network
        directory, cross-network routed query."""
        resolved = self._resolve_local(target, now)
        if resolved is None and target.kind in ("public_key", "key_hash"):
            resolved = self._resolve_via_ca(target, now)
            if resolved is None:
                resolved = self._resolve_via_directory(target.key_hash, now)
            if resolved is None:
                resolved = self._resolve_cross_network(target.key_hash, now)
        if resolved is None and target.kind == "account":
            resolved = self._resolve_account_ref(target, now)
        if resolved is None:
            self.env.log(self.vasp_id, "resolve", outcome="unresolved",
                         kind=target.kind)
        else:
            self.env.log(self.vasp_id, "resolve", outcome="resolved",
                         kind=target.kind, hops=len(resolved.resolution_path) - 1,
                         path=">".join(resolved.resolution_path))
        return resolved

    def _resolve_local(self, target: TransferTarget, now: int) -> Optional[ResolvedBeneficiary]:
        account: Optional[Account] = None
        if target.kind == "account":
            if target.vasp_id == self.vasp_id:
                account = self.accounts.get(target.account_id or "")
                if account is None:
                    return None
            else:
                return None
        else:
            account_id = self._accounts_by_key_hash.get(target.key_hash or b"")
            if account_id is None:
                return None
            account = self.accounts[account_id]
        cert = (
            self.certificate
            if account.custody_model is CustodyModel.COMMINGLED
            else account.certificate
        )
        if cert is None:
            return None
        revoked = self.revocation.is_revoked(cert.issuer_id, cert.serial)
        return ResolvedBeneficiary(
            certificate=cert,
            home_vasp_id=self.vasp_id,
            home_vasp_certificate=self.certificate,
            resolution_path=(self.vasp_id,),
            account_id=account.account_id,
            custody_model=account.custody_model.value,
            attributes=dict(account.attributes),
            revoked=revoked,
        )

    def _resolve_via_ca(self, target: TransferTarget, now: int) -> Optional[ResolvedBeneficiary]:
        lookup = self.ca.find_certificate_by_key_hash(target.key_hash, now)
        if lookup is None:
            return None
        home_vasp_id = lookup.attributes.get("vasp_id")
        home_cert = self._peer_certificate(home_vasp_id) if home_vasp_id else None
        return ResolvedBeneficiary(
            certificate=lookup.certificate,
            home_vasp_id=home_vasp_id,
            home_vasp_certificate=home_cert,
            resolution_path=(self.vasp_id, self.ca.ca_id),
            attributes=dict(lookup.attributes),
            revoked=lookup.status is CertStatus.REVOKED,
        )

    def _resolve_via_directory(self, key_hash: bytes, now: int) -> Optional[ResolvedBeneficiary]:
        from .network import query_certificate

        response = query_certificate(self, key_hash, self.env)
        if response is None:
            return None
        return self._from_query_response(
            response, (self.vasp_id, response.responder_vasp_id),
            revoked=response.status == "revoked",
        )

    def _resolve_cross_network(self, key_hash: bytes, now: int) -> Optional[ResolvedBeneficiary]:
        response, hops = route_cross_network_query(self, key_hash, self.env)
        if response is None:
            return None
        return self._from_query_response(response, tuple(hops),
                                         revoked=response.status == "revoked")

    def _resolve_account_ref(self, target: TransferTarget, now: int) -> Optional[ResolvedBeneficiary]:
        # Account inquiries go to the named VASP directly over the pair-wise
        # channel; shared membership is not required, reachability is.
        vasp_id = target.vasp_id or ""
        if not self.env.link_ok(self.vasp_id, vasp_id):
            return None
        peer = self.env.node(vasp_id)
        if peer is None:
            return None
        response = peer.respond_account_query(self.vasp_id, target.account_id or "", now)
        if response is None:
            return None
        return self._from_query_response(
            response, (self.vasp_id, vasp_id),
            account_id=target.account_id, revoked=response.status == "revoked",
        )

    def _from_query_response(
        self,
        response: QueryResponse,
        path: tuple[str, ...],
        account_id: Optional[str] = None,
        revoked: bool = False,
    ) -> ResolvedBeneficiary:
        attributes = dict(response.assertion.attributes) if response.assertion else None
        if attributes:
            account_id = account_id or attributes.get("account_id")
        return ResolvedBeneficiary(
            certificate=response.certificate,
            home_vasp_id=response.responder_vasp_id,
            home_vasp_certificate=response.responder_certificate,
            resolution_path=path,
            account_id=account_id,
            custody_model=attributes.get("custody_model") if attributes else None,
            attributes=attributes,
            assertion=response.assertion,
            revoked=revoked,
        )

    # -- transfer pipeline -----------------------------------------------------------

    def initiate_transfer(
        self,
        account_id: str,
        target: TransferTarget,
        amount: int,
        asset_type: str,
    ) -> TransferOutcome:
        """Run the pre-transfer pipeline and send the off-chain notice.

        Any failing pre-check denies the transfer with nothing broadcast. The
        returned outcome stays pending until the ack arrives (broadcast or
        rejection) or times out.
        """
        if amount <= 0:
            raise ValueError("amount must be positive")
        now = self.env.now
        account = self.accounts[account_id]
        outcome = TransferOutcome()
        self.env.log(self.vasp_id, "transfer_initiated", account=account_id,
                     amount=amount, asset=asset_type)

        originator_refs = self._account_refs(account)
        if not self.screen_suspect(originator_refs + self._target_refs(target)):
            return self._deny(outcome, DenialCode.SUSPECT_PARTY, "screening")

        resolved = self.resolve_beneficiary(target, now)
        if resolved is None or resolved.home_vasp_id is None or resolved.home_vasp_certificate is None:
            return self._deny(outcome, DenialCode.BENEFICIARY_UNRESOLVED)

        ben_refs: list[bytes | str] = [resolved.certificate.public_key_hash]
        if resolved.account_id:
            ben_refs.append(resolved.account_id)
        if not self.screen_suspect(ben_refs):
            return self._deny(outcome, DenialCode.SUSPECT_PARTY, "beneficiary")

        origin_cert = self._origin_certificate(account)
        if origin_cert is None:
            return self._deny(outcome, DenialCode.NO_ORIGINATOR_CERT)

        failure = self._validate_transfer_certificates(origin_cert, resolved)
        if failure is not None:
            return self._deny(outcome, DenialCode.CERT_INVALID, failure)

        try:
            assertion = self._originator_assertion(account, origin_cert, now)
        except Exception as exc:
            return self._deny(outcome, DenialCode.CERT_INVALID,
                              f"originator-customer:{exc}")

        tx = self._build_transfer_tx(account, resolved.certificate.subject_public_key,
                                     amount, asset_type)
        ref = BeneficiaryRef(
            public_key_hash=resolved.certificate.public_key_hash,
            account_id=resolved.account_id,
        )
        notice = self._build_notice(
            beneficiary_vasp_id=resolved.home_vasp_id,
            assertion=assertion, ref=ref, asset_type=asset_type, amount=amount,
            now=now, binding=tx.tx_id, batch_entries=None,
        )
        self._dispatch_notice(notice, tx, resolved, outcome, (account_id,), now)
        return outcome

    def build_commingled_batch(
        self,
        requests: Sequence[tuple[str, TransferTarget, int]],
        asset_type: str,
    ) -> tuple[TransferNotice, ChainTransaction, ResolvedBeneficiary, tuple[str, ...]]:
        """Merge commingled transfer requests into one notice and one prepared
        transaction to the single beneficiary VASP.

        Raises MixedDestination when the requests resolve to different VASPs.
        """
        if not requests:
            raise ValueError("batch requires at least one request")
        now = self.env.now
        resolved_targets: list[tuple[Account, ResolvedBeneficiary, int]] = []
        for account_id, target, amount in requests:
            if amount <= 0:
                raise ValueError("amount must be positive")
            account = self.accounts[account_id]
            if account.custody_model is not CustodyModel.COMMINGLED:
                raise ModelKeyMismatch("batched originators must be commingled accounts")
            resolved = self.resolve_beneficiary(target, now)
            if resolved is None or resolved.home_vasp_id is None:
                raise VaspError("unresolvable batch beneficiary")
            resolved_targets.append((account, resolved, amount))
        homes = {resolved.home_vasp_id for _, resolved, _ in resolved_targets}
        if len(homes) != 1:
            raise MixedDestination(",".join(sorted(h or "?" for h in homes)))
        home = resolved_targets[0][1]
        if home.home_vasp_certificate is None:
            raise VaspError("beneficiary VASP certificate unavailable")

        total = sum(amount for _, _, amount in resolved_targets)
        tx = self._build_transfer_tx(
            None, home.home_vasp_certificate.subject_public_key, total, asset_type
        )
        entries = tuple(
            (BeneficiaryRef(resolved.certificate.public_key_hash, resolved.account_id), amount)
            for _, resolved, amount in resolved_targets
        )
        assertion = self._pool_assertion(now)
        notice = self._build_notice(
            beneficiary_vasp_id=home.home_vasp_id,
            assertion=assertion,
            ref=BeneficiaryRef(home.home_vasp_certificate.public_key_hash,
                               f"{home.home_vasp_id}/pool"),
            asset_type=asset_type, amount=total, now=now, binding=tx.tx_id,
            batch_entries=entries,
        )
        account_ids = tuple(account.account_id for account, _, _ in resolved_targets)
        return notice, tx, home, account_ids

    def initiate_batch_transfer(
        self,
        requests: Sequence[tuple[str, TransferTarget, int]],
        asset_type: str,
    ) -> TransferOutcome:
        """Pipeline for a commingled batch: screen, validate, notice, ack, one tx."""
        now = self.env.now
        outcome = TransferOutcome()
        self.env.log(self.vasp_id, "transfer_initiated", batch=len(requests),
                     amount=sum(a for _, _, a in requests), asset=asset_type)

        refs: list[bytes | str] = []
        for account_id, target, _ in requests:
            refs.extend(self._account_refs(self.accounts[account_id]))
            refs.extend(self._target_refs(target))
        if not self.screen_suspect(refs):
            return self._deny(outcome, DenialCode.SUSPECT_PARTY, "screening")

        try:
            notice, tx, home, account_ids = self.build_commingled_batch(requests, asset_type)
        except (VaspError, ValueError) as exc:
            if isinstance(exc, MixedDestination):
                raise
            return self._deny(outcome, DenialCode.BENEFICIARY_UNRESOLVED, str(exc))

        if self.certificate is None:
            return self._deny(outcome, DenialCode.NO_ORIGINATOR_CERT)
        failure = self._validate_transfer_certificates(self.certificate, home)
        if failure is not None:
            return self._deny(outcome, DenialCode.CERT_INVALID, failure)

        self._dispatch_notice(notice, tx, home, outcome, account_ids, now, batch=True)
        return outcome

    def _dispatch_notice(
        self,
        notice: TransferNotice,
        tx: ChainTransaction,
        resolved: ResolvedBeneficiary,
        outcome: TransferOutcome,
        account_ids: tuple[str, ...],
        now: int,
        batch: bool = False,
    ) -> None:
        record = TravelRuleRecord(
            record_id=self._fresh_id(RECORD_ID_LEN),
            role=RecordRole.ORIGINATOR_SIDE,
            notice=notice,
            ack=None,
            chain_tx_id=None,
            status=RecordStatus.PENDING_ACK,
            failure_reason=None,
            created_at=now,
            updated_at=now,
            originator_account_ids=account_ids,
        )
        self.records[record.record_id] = record
        self._records_by_binding.setdefault(notice.intended_chain_tx_binding, []).append(
            record.record_id
        )
        outcome.record_id = record.record_id
        self._pending[notice.notice_id] = PendingTransfer(
            notice=notice, outcome=outcome, record_id=record.record_id,
            prepared_tx=tx, resolved=resolved, deadline=now + self.ack_timeout,
            batch=batch,
        )
        self.env.send(self.vasp_id, notice.beneficiary_vasp_id, "transfer_notice", notice)
        self.env.log(self.vasp_id, "notice_sent", notice=notice.notice_id.hex(),
                     beneficiary=notice.beneficiary_vasp_id,
                     binding=notice.intended_chain_tx_binding.hex())

    def _deny(self, outcome: TransferOutcome, code: DenialCode, detail: str = "") -> TransferOutcome:
        outcome.status = OutcomeStatus.DENIED
        outcome.denial = DenialReason(code, detail)
        self.env.log(self.vasp_id, "transfer_denied", reason=code.value, detail=detail)
        return outcome

    def _account_refs(self, account: Account) -> list[bytes | str]:
        refs: list[bytes | str] = [account.account_id]
        if account.customer_public_key is not None:
            refs.append(digest(account.customer_public_key))
        return refs

    def _target_refs(self, target: TransferTarget) -> list[bytes | str]:
        refs: list[bytes | str] = []
        if target.key_hash is not None:
            refs.append(target.key_hash)
        if target.account_id is not None:
            refs.append(target.account_id)
        return refs

    def _origin_certificate(self, account: Account) -> Optional[Certificate]:
        if account.custody_model is CustodyModel.COMMINGLED:
            return self.certificate
        return account.certificate

    def _validate_transfer_certificates(
        self, origin_cert: Certificate, resolved: ResolvedBeneficiary
    ) -> Optional[str]:
        """Validate the four certificates of the transfer; None means all valid."""
        checks = [
            ("originator-customer", origin_cert, self.chain_id),
            ("originator-vasp", self.certificate, None),
            ("beneficiary-vasp", resolved.home_vasp_certificate, None),
            ("beneficiary-customer", resolved.certificate, self.chain_id),
        ]
        for which, cert, chain_id in checks:
            if cert is None:
                return which
            result = validate_certificate(
                cert, self.trust_anchors, self.env.now, self.revocation, chain_id
            )
            if not result.ok:
                return f"{which}:{result.status.value}"
        if resolved.revoked:
            return "beneficiary-customer:revoked"
        return None

    def _originator_assertion(
        self, account: Account, origin_cert: Certificate, now: int
    ) -> AttributeAssertion:
        full = issue_assertion(
            self._keypair, self.vasp_id, account.subject_id, origin_cert,
            account.attributes, account.attributes, self._validator(), self._fresh_id(), now,
        )
        return filter_attributes(
            full, self.disclosure_policy, self._keypair, self.vasp_id, self._fresh_id(), now
        )

    def _pool_assertion(self, now: int) -> AttributeAssertion:
        if self.certificate is None:
            raise VaspError("VASP certificate required")
        attrs = self.vasp_attributes()
        full = issue_assertion(
            self._keypair, self.vasp_id, self.vasp_id, self.certificate,
            attrs, attrs, self._validator(), self._fresh_id(), now,
        )
        return filter_attributes(
            full, self.disclosure_policy, self._keypair, self.vasp_id, self._fresh_id(), now
        )

    def _build_transfer_tx(
        self,
        account: Optional[Account],
        to_public_key: bytes,
        amount: int,
        asset_type: str,
    ) -> ChainTransaction:
        """Sign the on-chain transaction with the model-appropriate key."""
        nonce = self._fresh_id(8)
        if account is None or account.custody_model is CustodyModel.COMMINGLED:
            return build_transaction(self._keypair, self._keypair.public_key,
                                     to_public_key, amount, asset_type, nonce)
        if account.custody_model is CustodyModel.KEY_CUSTODY:
            if account.custodied_private_key is None or account.customer_public_key is None:
                raise KeyUnavailable(account.account_id)
            return build_transaction(account.custodied_private_key, account.customer_public_key,
                                     to_public_key, amount, asset_type, nonce)
        wallet = self._wallets.get(account.account_id)
        if wallet is None:
            raise KeyUnavailable(f"no co-located wallet for {account.account_id}")
        return build_transaction(wallet, wallet.public_key,
                                 to_public_key, amount, asset_type, nonce)

    def _build_notice(
        self,
        beneficiary_vasp_id: str,
        assertion: AttributeAssertion,
        ref: BeneficiaryRef,
        asset_type: str,
        amount: int,
        now: int,
        binding: bytes,
        batch_entries: Optional[tuple[tuple[BeneficiaryRef, int], ...]],
    ) -> TransferNotice:
        unsigned = TransferNotice(
            notice_id=self._fresh_id(NOTICE_ID_LEN),
            originator_vasp_id=self.vasp_id,
            beneficiary_vasp_id=beneficiary_vasp_id,
            originator_assertion=assertion,
            beneficiary_ref=ref,
            asset_type=asset_type,
            amount=amount,
            execution_tick=now,
            intended_chain_tx_binding=binding,
            batch_entries=batch_entries,
        )
        return replace(unsigned,
                       originator_vasp_signature=self.sign_bytes(unsigned.signed_payload()))

    # -- beneficiary side --------------------------------------------------------

    def handle_transfer_notice(self, notice: TransferNotice, src: str) -> Optional[TransferAck]:
        """Validate an incoming notice and answer with a signed ack.

        Bad signatures are dropped (logged) rather than rejected, since the
        sender cannot be authenticated.
        """
        now = self.env.now
        if notice.notice_id in self._handled_notices:
            return None
        self._handled_notices.add(notice.notice_id)

        originator_cert = self._peer_certificate(notice.originator_vasp_id)
        if originator_cert is None or not crypto.verify(
            originator_cert.subject_public_key, notice.signed_payload(),
            notice.originator_vasp_signature,
        ):
            self.env.log(self.vasp_id, "notice_dropped",
                         origin=notice.originator_vasp_id, reason="bad-signature")
            return None
        originator_check = self._validator()(originator_cert)
        if not originator_check.ok:
            return self._reject_notice(notice, RejectReason.CERT_INVALID, now)

        accounts = []
        for ref in notice.all_refs():
            account = self._account_for_ref(ref)
            if account is None:
                return self._reject_notice(notice, RejectReason.UNKNOWN_BENEFICIARY, now)
            accounts.append(account)

        for account in accounts:
            if not self.screen_suspect(self._account_refs(account)):
                return self._reject_notice(notice, RejectReason.SUSPECT_PARTY, now)
        if not self.screen_suspect([notice.originator_vasp_id]):
            return self._reject_notice(notice, RejectReason.SUSPECT_PARTY, now)

        for account in accounts:
            cert = (
                self.certificate
                if account.custody_model is CustodyModel.COMMINGLED
                else account.certificate
            )
            if cert is None or not self._validator(self.chain_id)(cert).ok:
                return self._reject_notice(notice, RejectReason.CERT_INVALID, now)

        if not self._notice_assertion_acceptable(notice, originator_cert):
            return self._reject_notice(notice, RejectReason.POLICY_REFUSAL, now)

        if notice.batch_entries is not None:
            assertion = self._pool_assertion(now)
        else:
            assertion = self._customer_assertion(accounts[0], now)
            if assertion is None:
                return self._reject_notice(notice, RejectReason.CERT_INVALID, now)

        record = TravelRuleRecord(
            record_id=self._fresh_id(RECORD_ID_LEN),
            role=RecordRole.BENEFICIARY_SIDE,
            notice=notice,
            ack=None,
            chain_tx_id=None,
            status=RecordStatus.PENDING_ACK,
            failure_reason=None,
            created_at=now,
            updated_at=now,
            beneficiary_account_ids=tuple(a.account_id for a in accounts),
        )
        ack = self._signed_ack(notice.notice_id, AckDecision.ACCEPT, None, assertion)
        record.ack = ack
        record.advance(RecordStatus.PENDING_CHAIN, now)
        self.records[record.record_id] = record
        self._records_by_binding.setdefault(notice.intended_chain_tx_binding, []).append(
            record.record_id
        )
        self.env.send(self.vasp_id, notice.originator_vasp_id, "transfer_ack", ack)
        self.env.log(self.vasp_id, "ack_sent", notice=notice.notice_id.hex(),
                     decision="accept",
                     binding=notice.intended_chain_tx_binding.hex())
        return ack

    def _account_for_ref(self, ref: BeneficiaryRef) -> Optional[Account]:
        if ref.account_id is not None:
            account = self.accounts.get(ref.account_id)
            if account is not None:
                return account
        account_id = self._accounts_by_key_hash.get(ref.public_key_hash)
        return self.accounts.get(account_id) if account_id else None

    def _notice_assertion_acceptable(
        self, notice: TransferNotice, originator_cert: Certificate
    ) -> bool:
        assertion = notice.originator_assertion
        if not crypto.verify(
            originator_cert.subject_public_key, assertion.signed_payload(),
            assertion.vasp_signature,
        ):
            return False
        rules = self._rules_for_peer(notice.originator_vasp_id)
        required = rules.required_disclosure_policy.allowed_attributes if rules else set()
        missing = set(required) - set(assertion.attributes)
        if missing:
            self.env.log(self.vasp_id, "policy_refusal",
                         missing=",".join(sorted(missing)))
            return False
        # Certificate-link check is best effort: enforceable only when the
        # linked subject certificate is locally resolvable.
        subject_hash = assertion.attributes.get("public_key_hash")
        if subject_hash:
            try:
                key_hash = bytes.fromhex(subject_hash)
            except ValueError:
                return False
            local = self._accounts_by_key_hash.get(key_hash)
            if local is not None:
                cert = self.accounts[local].certificate
                if cert is not None and assertion.linked_certificate_hash != cert.fingerprint():
                    return False
        return True

    def _rules_for_peer(self, vasp_id: str):
        for network in self.networks_sorted():
            if vasp_id in network.members:
                return network.rules
        networks = self.networks_sorted()
        return networks[0].rules if networks else None

    def _reject_notice(self, notice: TransferNotice, reason: RejectReason, now: int) -> TransferAck:
        ack = self._signed_ack(notice.notice_id, AckDecision.REJECT, reason, None)
        self.env.send(self.vasp_id, notice.originator_vasp_id, "transfer_ack", ack)
        self.env.log(self.vasp_id, "ack_sent", notice=notice.notice_id.hex(),
                     decision="reject", reason=reason.value)
        return ack

    def _signed_ack(
        self,
        notice_id: bytes,
        decision: AckDecision,
        reason: Optional[RejectReason],
        assertion: Optional[AttributeAssertion],
    ) -> TransferAck:
        unsigned = TransferAck(
            notice_id=notice_id, decision=decision, reject_reason=reason,
            beneficiary_assertion=assertion,
        )
        return replace(unsigned,
                       beneficiary_vasp_signature=self.sign_bytes(unsigned.signed_payload()))

    # -- ack handling and on-chain execution ----------------------------------------

    def on_transfer_ack(self, ack: TransferAck, src: str) -> None:
        now = self.env.now
        pending = self._pending.get(ack.notice_id)
        if pending is None:
            self.env.log(self.vasp_id, "ack_ignored", notice=ack.notice_id.hex())
            return
        home_cert = pending.resolved.home_vasp_certificate
        if home_cert is None or not crypto.verify(
            home_cert.subject_public_key, ack.signed_payload(), ack.beneficiary_vasp_signature
        ):
            self.env.log(self.vasp_id, "ack_dropped", notice=ack.notice_id.hex(),
                         reason="bad-signature")
            return
        del self._pending[ack.notice_id]
        record = self.records[pending.record_id]
        self.env.log(self.vasp_id, "ack_received", notice=ack.notice_id.hex(),
                     decision=ack.decision.value,
                     binding=pending.notice.intended_chain_tx_binding.hex())

        if ack.decision is AckDecision.REJECT:
            reason = ack.reject_reason.value if ack.reject_reason else "unspecified"
            record.ack = ack
            record.advance(RecordStatus.FAILED, now, f"AckRejected:{reason}")
            self._deny(pending.outcome, DenialCode.ACK_REJECTED, reason)
            return

        if not self._accept_assertion_valid(ack, pending):
            record.ack = ack
            record.advance(RecordStatus.FAILED, now, "AckRejected:invalid-assertion")
            self._deny(pending.outcome, DenialCode.ACK_REJECTED, "invalid-assertion")
            return

        record.ack = ack
        tx_id = self.execute_onchain(pending)
        if tx_id is None:
            record.advance(RecordStatus.FAILED, now, "ChainRejected")
            self._deny(pending.outcome, DenialCode.CHAIN_REJECTED)
            return
        record.chain_tx_id = tx_id
        record.advance(RecordStatus.PENDING_CHAIN, now)
        pending.outcome.status = OutcomeStatus.BROADCAST
        pending.outcome.chain_tx_id = tx_id

    def _accept_assertion_valid(self, ack: TransferAck, pending: PendingTransfer) -> bool:
        if ack.beneficiary_assertion is None:
            return False
        home_cert = pending.resolved.home_vasp_certificate
        subject_cert = home_cert if pending.batch else pending.resolved.certificate
        if home_cert is None or subject_cert is None:
            return False
        return verify_assertion(
            ack.beneficiary_assertion, home_cert, subject_cert, self._validator()
        )

    def execute_onchain(self, pending: PendingTransfer) -> Optional[bytes]:
        """Broadcast the prepared transaction after an accepting ack."""
        if pending.outcome.status is not OutcomeStatus.PENDING:
            raise VaspError("transfer already resolved")
        result = self.env.submit_tx(self.vasp_id, pending.prepared_tx)
        if not result.accepted:
            self.env.log(self.vasp_id, "chain_reject", reason=result.reason or "")
            return None
        return result.tx_id

    def sweep_ack_timeouts(self, now: int) -> None:
        for notice_id in sorted(self._pending):
            pending = self._pending[notice_id]
            if now < pending.deadline:
                continue
            del self._pending[notice_id]
            record = self.records[pending.record_id]
            record.advance(RecordStatus.FAILED, now, "ChannelTimeout")
            self._deny(pending.outcome, DenialCode.CHANNEL_TIMEOUT)

    # -- confirmations, reconciliation, audit ---------------------------------------

    def on_chain_confirmation(self, tx: ChainTransaction, confirmed_tick: int) -> None:
        """Advance records whose binding digest matches the confirmed tx."""
        now = self.env.now
        recomputed = digest(tx.to_bytes())
        matched = False
        for record_id in list(self._records_by_binding.get(recomputed, [])):
            record = self.records[record_id]
            if record.status is not RecordStatus.PENDING_CHAIN:
                continue
            expected = record.notice.intended_chain_tx_binding
            if expected != recomputed:
                record.advance(RecordStatus.FAILED, now, "BindingMismatch")
                self.env.log(self.vasp_id, "record_failed", record=record_id.hex(),
                             reason="BindingMismatch")
                continue
            record.chain_tx_id = recomputed
            record.advance(RecordStatus.CONFIRMED, now)
            matched = True
            self.env.log(self.vasp_id, "record_confirmed", record=record_id.hex(),
                         role=record.role.value, tx=recomputed.hex())
        # A confirmation matching a stored tx id but not the notice binding is
        # a tampered-content signal.
        for record_id in sorted(self.records):
            record = self.records[record_id]
            if (
                record.status is RecordStatus.PENDING_CHAIN
                and record.chain_tx_id is not None
                and record.chain_tx_id == tx.tx_id
                and record.notice.intended_chain_tx_binding != recomputed
            ):
                record.advance(RecordStatus.FAILED, now, "BindingMismatch")
                self.env.log(self.vasp_id, "record_failed", record=record_id.hex(),
                             reason="BindingMismatch")
        if not matched and self._involves_my_keys(tx):
            if recomputed not in self._records_by_binding:
                self.env.log(self.vasp_id, "confirmation_unmatched", tx=recomputed.hex())

    def known_keys(self) -> set[bytes]:
        keys = {self._keypair.public_key}
        for account in self.accounts.values():
            if account.customer_public_key is not None:
                keys.add(account.customer_public_key)
        return keys

    def _involves_my_keys(self, tx: ChainTransaction) -> bool:
        keys = self.known_keys()
        return tx.from_public_key in keys or tx.to_public_key in keys

    def reconcile(self) -> ReconciliationReport:
        """Cross-join local records against ledger entries touching our keys."""
        confirmed_bindings = {
            record.chain_tx_id
            for record in self.records.values()
            if record.status is RecordStatus.CONFIRMED and record.chain_tx_id is not None
        }
        orphans = []
        matched = 0
        for tx, _tick in self.env.chain.confirmed_transactions():
            if not self._involves_my_keys(tx):
                continue
            if tx.tx_id in confirmed_bindings:
                matched += 1
            else:
                orphans.append(tx.tx_id)
        unconfirmed = [
            record_id
            for record_id in sorted(self.records)
            if self.records[record_id].status
            in (RecordStatus.PENDING_ACK, RecordStatus.PENDING_CHAIN)
        ]
        return ReconciliationReport(
            matched=matched,
            orphan_chain_txs=tuple(orphans),
            unconfirmed_records=tuple(unconfirmed),
        )

    def audit_travel_rule(self) -> AuditReport:
        """Check every confirmed record for the travel-rule evidence set."""
        violations: list[tuple[str, str]] = []
        checked = 0
        for record_id in sorted(self.records):
            record = self.records[record_id]
            if record.status is not RecordStatus.CONFIRMED:
                continue
            checked += 1
            rid = record_id.hex()
            notice = record.notice
            if notice.originator_assertion is None:
                violations.append((rid, "originator_assertion"))
            elif len(notice.originator_assertion.linked_certificate_hash) != crypto.HASH_LEN:
                violations.append((rid, "originator_key_ownership_evidence"))
            if record.ack is None or record.ack.beneficiary_assertion is None:
                violations.append((rid, "beneficiary_assertion"))
            elif len(record.ack.beneficiary_assertion.linked_certificate_hash) != crypto.HASH_LEN:
                violations.append((rid, "beneficiary_key_ownership_evidence"))
            if notice.amount <= 0:
                violations.append((rid, "amount"))
            if notice.execution_tick is None:
                violations.append((rid, "execution_tick"))
            if not notice.originator_vasp_id or not notice.beneficiary_vasp_id:
                violations.append((rid, "vasp_identities"))
            local_accounts = (
                record.originator_account_ids
                if record.role is RecordRole.ORIGINATOR_SIDE
                else record.beneficiary_account_ids
            )
            for account_id in local_accounts:
                account = self.accounts.get(account_id)
                if account is None:
                    violations.append((rid, f"account:{account_id}"))
                    continue
                if account.custody_model is CustodyModel.COMMINGLED:
                    continue
                if account.key_ownership_evidence is None:
                    violations.append((rid, f"key_ownership_evidence:{account_id}"))
                if (
                    account.custody_model is CustodyModel.KEY_CUSTODY
                    and account.key_operator_evidence is None
                ):
                    violations.append((rid, f"key_operator_evidence:{account_id}"))
        return AuditReport(records_checked=checked, violations=tuple(violations))

    def check_account_invariants(self) -> None:
        for account in self.accounts.values():
            account.check_invariants()

    # -- message dispatch --------------------------------------------------------

    def on_message(self, kind: str, payload, src: str) -> None:
        if kind == "transfer_notice":
            self.handle_transfer_notice(payload, src)
        elif kind == "transfer_ack":
            self.on_transfer_ack(payload, src)
        elif kind == "dir_delta":
            self.on_dir_delta(payload, src)
        elif kind == "dir_snapshot":
            self.on_dir_snapshot(payload, src)
        elif kind == "dir_pull":
            self.on_dir_pull(src)
        elif kind == "dir_announce":
            self.on_dir_announce(payload, src)
        elif kind == "crl_update":
            self.on_crl_update(payload, src)
        elif kind == "reach_adv":
            self.on_reachability_advertisement(payload, src)
        else:
            self.env.log(self.vasp_id, "message_ignored", kind=kind)

    def on_reachability_advertisement(self, adv: ReachabilityAdvertisement, src: str) -> None:
        for network in self.networks_sorted():
            if network.find_link_from(src, self.vasp_id) is None:
                continue
            verdict, reason = process_advertisement(network, self, adv, src, self.env)
            self.env.log(self.vasp_id, "advertisement",
                         verdict=verdict, reason=reason,
                         origin=adv.origin_network_id,
                         network=network.network_id,
                         path=">".join(adv.network_path),
                         hashes=len(adv.advertised_hashes))
            return
        self.env.log(self.vasp_id, "advertisement", verdict="drop",
                     reason="no-link", origin=adv.origin_network_id,
                     path=">".join(adv.network_path), hashes=len(adv.advertised_hashes))

    def advertise_reachability(self, now: int) -> None:
        """Send this network's directory summary over our peering links."""
        from .network import build_advertisement

        for network in self.networks_sorted():
            for link in network.links_of(self.vasp_id):
                adv = build_advertisement(network, self)
                far_gateway, _far_network = link.far_side(network.network_id)
                self.env.send(self.vasp_id, far_gateway, "reach_adv", adv)
                self.env.log(self.vasp_id, "advertisement_sent",
                             network=network.network_id, to=far_gateway,
                             hashes=len(adv.advertised_hashes))
