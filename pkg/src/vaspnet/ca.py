"""Certificate authority services: registration, issuance, revocation,
CRL/delta-CRL publication, status responses, and lookup by public key.

Certificates are X.509-style bindings of a subject identity to an Ed25519
public key, serialized with the canonical TLV encoding and signed by the
issuing CA. Chains are depth one: a self-signed root signs subject
certificates directly.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from . import crypto
from .crypto import (
    KeyPair,
    canonical_decode,
    canonical_encode,
    dec_str,
    dec_u64,
    digest,
    enc_str,
    enc_u64,
)

SERIAL_LEN = 16
SIGNATURE_ALGORITHM = "Ed25519-SHA256"


class CaError(Exception):
    """Base class for CA service errors."""


class InvalidValidity(CaError):
    pass


class RegistrationRejected(CaError):
    pass


class KeyAlreadyBound(CaError):
    pass


class ClassTooLow(CaError):
    pass


class UnknownSerial(CaError):
    pass


class AlreadyRevoked(CaError):
    pass


class UnknownBase(CaError):
    pass


class CertClass(enum.IntEnum):
    """Assurance grade; higher classes require more vetted attributes."""

    CLASS1 = 1
    CLASS2 = 2
    CLASS3 = 3

    @property
    def label(self) -> str:
        return f"class{int(self)}"

    @classmethod
    def from_label(cls, label: str) -> "CertClass":
        for member in cls:
            if member.label == label:
                return member
        raise ValueError(f"unknown certificate class {label!r}")


# Required attribute sets are cumulative: each class needs its own set plus
# everything below it. Overridable per CA instance.
DEFAULT_CLASS_TABLE: dict[CertClass, frozenset[str]] = {
    CertClass.CLASS1: frozenset({"name", "email"}),
    CertClass.CLASS2: frozenset({"government_id", "address"}),
    CertClass.CLASS3: frozenset({"organization_vetting_ref"}),
}

# Attributes a CA discloses alongside lookup responses unless configured
# otherwise. Kept to travel-rule-relevant identity data.
DEFAULT_CA_DISCLOSURE = frozenset({"name", "address", "vasp_id"})


class RevocationReason(enum.Enum):
    KEY_COMPROMISE = "keyCompromise"
    AFFILIATION_CHANGED = "affiliationChanged"
    SUPERSEDED = "superseded"
    CESSATION_OF_OPERATION = "cessationOfOperation"
    UNSPECIFIED = "unspecified"


@dataclass(frozen=True)
class CertificateProfile:
    """Mechanical usage constraints carried inside certificates.

    Keys are signature-only by construction; ``permitted_chains`` empty means
    unrestricted.
    """

    profile_id: str
    permitted_usage: frozenset[str] = frozenset({"signature"})
    permitted_chains: frozenset[str] = frozenset()
    minimum_class: CertClass = CertClass.CLASS1

    def __post_init__(self) -> None:
        if "signature" not in self.permitted_usage:
            raise ValueError("signature usage must always be permitted")
        if self.permitted_usage - {"signature"}:
            raise ValueError("only signature usage may be granted")

    def to_bytes(self) -> bytes:
        return canonical_encode([
            (1, enc_str(self.profile_id)),
            (2, enc_str(",".join(sorted(self.permitted_usage)))),
            (3, enc_str(",".join(sorted(self.permitted_chains)))),
            (4, enc_u64(int(self.minimum_class))),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "CertificateProfile":
        fields = dict(canonical_decode(data))
        chains = dec_str(fields[3])
        return cls(
            profile_id=dec_str(fields[1]),
            permitted_usage=frozenset(dec_str(fields[2]).split(",")),
            permitted_chains=frozenset(chains.split(",")) if chains else frozenset(),
            minimum_class=CertClass(dec_u64(fields[4])),
        )


DEFAULT_PROFILE = CertificateProfile(profile_id="vasp-default")
ROOT_PROFILE = CertificateProfile(profile_id="ca-root", minimum_class=CertClass.CLASS3)


@dataclass(frozen=True)
class Certificate:
    """Signed binding of a subject identity to a public key."""

    version: int
    serial: bytes
    signature_algorithm: str
    issuer_id: str
    validity_not_before: int
    validity_not_after: int
    subject_id: str
    subject_public_key: bytes
    profile: CertificateProfile
    cert_class: CertClass
    issuer_signature: bytes

    @property
    def serial_hex(self) -> str:
        return self.serial.hex()

    @property
    def public_key_hash(self) -> bytes:
        return digest(self.subject_public_key)

    def signed_payload(self) -> bytes:
        return canonical_encode([
            (1, enc_u64(self.version)),
            (2, self.serial),
            (3, enc_str(self.signature_algorithm)),
            (4, enc_str(self.issuer_id)),
            (5, enc_u64(self.validity_not_before)),
            (6, enc_u64(self.validity_not_after)),
            (7, enc_str(self.subject_id)),
            (8, self.subject_public_key),
            (9, self.profile.to_bytes()),
            (10, enc_str(self.cert_class.label)),
        ])

    def to_bytes(self) -> bytes:
        return self.signed_payload() + canonical_encode([(11, self.issuer_signature)])

    @classmethod
    def from_bytes(cls, data: bytes) -> "Certificate":
        fields = dict(canonical_decode(data))
        return cls(
            version=dec_u64(fields[1]),
            serial=fields[2],
            signature_algorithm=dec_str(fields[3]),
            issuer_id=dec_str(fields[4]),
            validity_not_before=dec_u64(fields[5]),
            validity_not_after=dec_u64(fields[6]),
            subject_id=dec_str(fields[7]),
            subject_public_key=fields[8],
            profile=CertificateProfile.from_bytes(fields[9]),
            cert_class=CertClass.from_label(dec_str(fields[10])),
            issuer_signature=fields[11],
        )

    def fingerprint(self) -> bytes:
        """Digest of the full certificate bytes (the evidence/link hash)."""
        return digest(self.to_bytes())


@dataclass(frozen=True)
class RegistrationRecord:
    subject_id: str
    submitted_attributes: Mapping[str, str]
    assigned_class: CertClass
    verification_log: tuple[tuple[str, bool], ...]
    timestamp: int


@dataclass(frozen=True)
class RevocationEntry:
    serial: bytes
    reason: RevocationReason
    revoked_at: int

    def to_bytes(self) -> bytes:
        return canonical_encode([
            (1, self.serial),
            (2, enc_str(self.reason.value)),
            (3, enc_u64(self.revoked_at)),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "RevocationEntry":
        fields = dict(canonical_decode(data))
        return cls(
            serial=fields[1],
            reason=RevocationReason(dec_str(fields[2])),
            revoked_at=dec_u64(fields[3]),
        )


def _entries_payload(entries: Iterable[RevocationEntry]) -> bytes:
    ordered = sorted(entries, key=lambda e: e.serial)
    return crypto.encode_bytes_list(e.to_bytes() for e in ordered)


@dataclass(frozen=True)
class Crl:
    """Full revocation list; ``crl_number`` strictly increases per issuer."""

    issuer_id: str
    crl_number: int
    entries: frozenset[RevocationEntry]
    issued_at: int
    signature: bytes

    def signed_payload(self) -> bytes:
        return canonical_encode([
            (1, enc_str(self.issuer_id)),
            (2, enc_u64(self.crl_number)),
            (3, _entries_payload(self.entries)),
            (4, enc_u64(self.issued_at)),
        ])

    def to_bytes(self) -> bytes:
        return self.signed_payload() + canonical_encode([(5, self.signature)])

    def report_lines(self) -> list[str]:
        return [
            f"{e.serial.hex()},{e.reason.value},{e.revoked_at}"
            for e in sorted(self.entries, key=lambda e: e.serial)
        ]


@dataclass(frozen=True)
class DeltaCrl:
    """Additions since a base CRL number."""

    issuer_id: str
    crl_number: int
    base_crl_number: int
    entries: frozenset[RevocationEntry]
    issued_at: int
    signature: bytes

    def signed_payload(self) -> bytes:
        return canonical_encode([
            (1, enc_str(self.issuer_id)),
            (2, enc_u64(self.crl_number)),
            (3, enc_u64(self.base_crl_number)),
            (4, _entries_payload(self.entries)),
            (5, enc_u64(self.issued_at)),
        ])

    def to_bytes(self) -> bytes:
        return self.signed_payload() + canonical_encode([(6, self.signature)])


def apply_delta_crl(base: Crl, delta: DeltaCrl) -> frozenset[RevocationEntry]:
    """Entry set obtained by folding a delta onto its base CRL."""
    if delta.issuer_id != base.issuer_id:
        raise UnknownBase("delta issuer does not match base")
    if delta.base_crl_number != base.crl_number:
        raise UnknownBase(
            f"delta base {delta.base_crl_number} != crl_number {base.crl_number}"
        )
    return base.entries | delta.entries


class CertStatus(enum.Enum):
    GOOD = "good"
    REVOKED = "revoked"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class CertificateStatusResponse:
    serial: bytes
    status: CertStatus
    reason: Optional[RevocationReason]
    revoked_at: Optional[int]
    produced_at: int
    responder_id: str
    responder_signature: bytes

    def signed_payload(self) -> bytes:
        fields: list[tuple[int, bytes]] = [
            (1, self.serial),
            (2, enc_str(self.status.value)),
        ]
        if self.reason is not None:
            fields.append((3, enc_str(self.reason.value)))
        if self.revoked_at is not None:
            fields.append((4, enc_u64(self.revoked_at)))
        fields.append((5, enc_u64(self.produced_at)))
        fields.append((6, enc_str(self.responder_id)))
        return canonical_encode(fields)


class ValidationStatus(enum.Enum):
    VALID = "valid"
    UNKNOWN_ISSUER = "unknown-issuer"
    BAD_SIGNATURE = "bad-signature"
    EXPIRED = "expired"
    REVOKED = "revoked"
    PROFILE_VIOLATION = "profile-violation"


@dataclass(frozen=True)
class ValidationResult:
    status: ValidationStatus
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status is ValidationStatus.VALID


class RevocationView:
    """A relying party's merged view of issuer CRLs.

    Holds, per issuer, the entry set at the highest CRL number seen. Stale
    (lower-numbered) lists are ignored; deltas apply only on their exact base.
    """

    def __init__(self) -> None:
        self._numbers: dict[str, int] = {}
        self._entries: dict[str, dict[bytes, RevocationEntry]] = {}

    def crl_number(self, issuer_id: str) -> int:
        return self._numbers.get(issuer_id, 0)

    def entries(self, issuer_id: str) -> frozenset[RevocationEntry]:
        return frozenset(self._entries.get(issuer_id, {}).values())

    def is_revoked(self, issuer_id: str, serial: bytes) -> bool:
        return serial in self._entries.get(issuer_id, {})

    def revocation_entry(self, issuer_id: str, serial: bytes) -> Optional[RevocationEntry]:
        return self._entries.get(issuer_id, {}).get(serial)

    def merge_crl(self, crl: Crl) -> bool:
        """Adopt a full CRL if newer than the held one. Returns True if applied."""
        if crl.crl_number <= self._numbers.get(crl.issuer_id, 0):
            return False
        self._numbers[crl.issuer_id] = crl.crl_number
        self._entries[crl.issuer_id] = {e.serial: e for e in crl.entries}
        return True

    def merge_delta(self, delta: DeltaCrl) -> bool:
        """Apply a delta if its base matches the held number. Returns True if applied."""
        if delta.base_crl_number != self._numbers.get(delta.issuer_id, 0):
            return False
        if delta.crl_number <= self._numbers.get(delta.issuer_id, 0):
            return False
        held = self._entries.setdefault(delta.issuer_id, {})
        for entry in delta.entries:
            held[entry.serial] = entry
        self._numbers[delta.issuer_id] = delta.crl_number
        return True

    def merge_view(self, other: "RevocationView") -> None:
        """Union with another view, keeping the highest CRL number per issuer."""
        for issuer_id, number in other._numbers.items():
            if number > self._numbers.get(issuer_id, 0):
                self._numbers[issuer_id] = number
                self._entries[issuer_id] = dict(other._entries[issuer_id])

    def issuers(self) -> list[str]:
        return sorted(self._numbers)


def validate_certificate(
    cert: Certificate,
    trust_anchors: Mapping[str, Certificate],
    now: int,
    revocation: Optional[RevocationView] = None,
    chain_id: Optional[str] = None,
) -> ValidationResult:
    """Validate a certificate against root anchors at the given tick.

    Checks run in a fixed order and the first failure wins: unknown issuer,
    bad signature, expired, revoked, profile violation.
    """
    anchor = trust_anchors.get(cert.issuer_id)
    if anchor is None:
        return ValidationResult(ValidationStatus.UNKNOWN_ISSUER, cert.issuer_id)
    if not crypto.verify(anchor.subject_public_key, cert.signed_payload(), cert.issuer_signature):
        return ValidationResult(ValidationStatus.BAD_SIGNATURE)
    if not cert.validity_not_before <= now <= cert.validity_not_after:
        return ValidationResult(ValidationStatus.EXPIRED, f"now={now}")
    if revocation is not None and revocation.is_revoked(cert.issuer_id, cert.serial):
        entry = revocation.revocation_entry(cert.issuer_id, cert.serial)
        return ValidationResult(ValidationStatus.REVOKED, entry.reason.value if entry else "")
    if "signature" not in cert.profile.permitted_usage:
        return ValidationResult(ValidationStatus.PROFILE_VIOLATION, "usage")
    if cert.cert_class < cert.profile.minimum_class:
        return ValidationResult(
            ValidationStatus.PROFILE_VIOLATION,
            f"class {cert.cert_class.label} below {cert.profile.minimum_class.label}",
        )
    if chain_id is not None and cert.profile.permitted_chains and chain_id not in cert.profile.permitted_chains:
        return ValidationResult(ValidationStatus.PROFILE_VIOLATION, f"chain {chain_id}")
    return ValidationResult(ValidationStatus.VALID)


@dataclass(frozen=True)
class CertificateLookup:
    """Response to a lookup-by-public-key: certificate plus shared attributes.

    A revoked subject's certificate is still returned, flagged, so the
    querying VASP holds evidence to refuse the transfer.
    """

    certificate: Certificate
    attributes: Mapping[str, str]
    status: CertStatus


@dataclass
class _IssuedRecord:
    certificate: Certificate
    registration: RegistrationRecord


class CertificateAuthority:
    """One CA instance: a single logical actor over its own issuance state."""

    def __init__(
        self,
        ca_id: str,
        keypair: KeyPair,
        rng: random.Random,
        class_table: Optional[Mapping[CertClass, frozenset[str]]] = None,
        disclosure: frozenset[str] = DEFAULT_CA_DISCLOSURE,
    ) -> None:
        self.ca_id = ca_id
        self._keypair = keypair
        self._rng = rng
        self._class_table = dict(class_table or DEFAULT_CLASS_TABLE)
        self._disclosure = disclosure
        self.root_certificate: Optional[Certificate] = None
        self._issued: dict[bytes, _IssuedRecord] = {}
        self._by_key_hash: dict[bytes, list[bytes]] = {}
        self._revoked: dict[bytes, RevocationEntry] = {}
        self._crl_number = 0
        self._crl_history: dict[int, frozenset[RevocationEntry]] = {}

    # -- issuance ----------------------------------------------------------

    def self_sign_root(self, validity_not_before: int, validity_not_after: int) -> Certificate:
        """Mint the CA's own root certificate (issuer == subject)."""
        if validity_not_before >= validity_not_after:
            raise InvalidValidity("not_before must precede not_after")
        cert = self._build_certificate(
            issuer_id=self.ca_id,
            subject_id=self.ca_id,
            subject_public_key=self._keypair.public_key,
            profile=ROOT_PROFILE,
            cert_class=CertClass.CLASS3,
            validity=(validity_not_before, validity_not_after),
        )
        self.root_certificate = cert
        return cert

    def register_subject(
        self,
        subject_id: str,
        submitted_attributes: Mapping[str, str],
        requested_class: CertClass,
        now: int,
    ) -> RegistrationRecord:
        """Vet submitted attributes and assign the highest attainable class.

        A request above the attainable class is downgraded, not rejected;
        failing even Class 1 requirements rejects the registration.
        """
        if not submitted_attributes:
            raise RegistrationRejected("no attributes submitted")
        log: list[tuple[str, bool]] = [("attributes_nonempty", True)]
        assigned: Optional[CertClass] = None
        cumulative: set[str] = set()
        for cls in CertClass:
            cumulative |= self._class_table[cls]
            satisfied = cumulative <= set(submitted_attributes)
            log.append((f"{cls.label}_attributes", satisfied))
            if satisfied and cls <= requested_class:
                assigned = cls
        if assigned is None:
            raise RegistrationRejected(
                "missing mandatory attributes: "
                + ",".join(sorted(self._class_table[CertClass.CLASS1] - set(submitted_attributes)))
            )
        return RegistrationRecord(
            subject_id=subject_id,
            submitted_attributes=dict(submitted_attributes),
            assigned_class=assigned,
            verification_log=tuple(log),
            timestamp=now,
        )

    def issue_certificate(
        self,
        registration: RegistrationRecord,
        subject_public_key: bytes,
        profile: CertificateProfile,
        validity_not_before: int,
        validity_not_after: int,
        now: int,
    ) -> Certificate:
        """Issue a signed certificate binding the registered subject to a key.

        A key live-bound to a different subject is refused. Re-issuing for the
        same subject supersedes (revokes) the previous live certificate so the
        live binding stays unique per key.
        """
        if self.root_certificate is None:
            raise CaError("root certificate not initialized")
        if validity_not_before >= validity_not_after:
            raise InvalidValidity("not_before must precede not_after")
        if profile.minimum_class > registration.assigned_class:
            raise ClassTooLow(
                f"profile requires {profile.minimum_class.label}, "
                f"registration assigned {registration.assigned_class.label}"
            )
        key_hash = digest(subject_public_key)
        for serial in self._by_key_hash.get(key_hash, []):
            existing = self._issued[serial].certificate
            if not self._is_live(existing, now):
                continue
            if existing.subject_id != registration.subject_id:
                raise KeyAlreadyBound(
                    f"key already bound to subject {existing.subject_id!r}"
                )
            self.revoke(serial, RevocationReason.SUPERSEDED, now)
        cert = self._build_certificate(
            issuer_id=self.ca_id,
            subject_id=registration.subject_id,
            subject_public_key=subject_public_key,
            profile=profile,
            cert_class=registration.assigned_class,
            validity=(validity_not_before, validity_not_after),
        )
        self._issued[cert.serial] = _IssuedRecord(cert, registration)
        self._by_key_hash.setdefault(key_hash, []).append(cert.serial)
        return cert

    def _build_certificate(
        self,
        issuer_id: str,
        subject_id: str,
        subject_public_key: bytes,
        profile: CertificateProfile,
        cert_class: CertClass,
        validity: tuple[int, int],
    ) -> Certificate:
        unsigned = Certificate(
            version=3,
            serial=self._fresh_serial(),
            signature_algorithm=SIGNATURE_ALGORITHM,
            issuer_id=issuer_id,
            validity_not_before=validity[0],
            validity_not_after=validity[1],
            subject_id=subject_id,
            subject_public_key=subject_public_key,
            profile=profile,
            cert_class=cert_class,
            issuer_signature=b"",
        )
        signature = crypto.sign(self._keypair, unsigned.signed_payload())
        return Certificate(**{**unsigned.__dict__, "issuer_signature": signature})

    def _fresh_serial(self) -> bytes:
        while True:
            serial = self._rng.getrandbits(SERIAL_LEN * 8).to_bytes(SERIAL_LEN, "big")
            if serial not in self._issued:
                return serial

    def _is_live(self, cert: Certificate, now: int) -> bool:
        return cert.serial not in self._revoked and now <= cert.validity_not_after

    # -- revocation and status ---------------------------------------------

    def revoke(self, serial: bytes, reason: RevocationReason, now: int) -> RevocationEntry:
        if serial not in self._issued and (
            self.root_certificate is None or serial != self.root_certificate.serial
        ):
            raise UnknownSerial(serial.hex())
        if serial in self._revoked:
            raise AlreadyRevoked(serial.hex())
        entry = RevocationEntry(serial=serial, reason=reason, revoked_at=now)
        self._revoked[serial] = entry
        return entry

    def generate_crl(self, now: int) -> Crl:
        self._crl_number += 1
        entries = frozenset(self._revoked.values())
        self._crl_history[self._crl_number] = entries
        unsigned = Crl(
            issuer_id=self.ca_id,
            crl_number=self._crl_number,
            entries=entries,
            issued_at=now,
            signature=b"",
        )
        signature = crypto.sign(self._keypair, unsigned.signed_payload())
        return Crl(**{**unsigned.__dict__, "signature": signature})

    def generate_delta_crl(self, base_number: int, now: int) -> DeltaCrl:
        if base_number not in self._crl_history:
            raise UnknownBase(str(base_number))
        self._crl_number += 1
        entries = frozenset(self._revoked.values()) - self._crl_history[base_number]
        self._crl_history[self._crl_number] = frozenset(self._revoked.values())
        unsigned = DeltaCrl(
            issuer_id=self.ca_id,
            crl_number=self._crl_number,
            base_crl_number=base_number,
            entries=entries,
            issued_at=now,
            signature=b"",
        )
        signature = crypto.sign(self._keypair, unsigned.signed_payload())
        return DeltaCrl(**{**unsigned.__dict__, "signature": signature})

    def check_status(self, serial: bytes, now: int) -> CertificateStatusResponse:
        """OCSP-style signed status: good, revoked(reason, tick), or unknown."""
        known = serial in self._issued or (
            self.root_certificate is not None and serial == self.root_certificate.serial
        )
        entry = self._revoked.get(serial)
        if entry is not None:
            status, reason, revoked_at = CertStatus.REVOKED, entry.reason, entry.revoked_at
        elif known:
            status, reason, revoked_at = CertStatus.GOOD, None, None
        else:
            status, reason, revoked_at = CertStatus.UNKNOWN, None, None
        unsigned = CertificateStatusResponse(
            serial=serial,
            status=status,
            reason=reason,
            revoked_at=revoked_at,
            produced_at=now,
            responder_id=self.ca_id,
            responder_signature=b"",
        )
        signature = crypto.sign(self._keypair, unsigned.signed_payload())
        return CertificateStatusResponse(**{**unsigned.__dict__, "responder_signature": signature})

    # -- lookup --------------------------------------------------------------

    def find_certificate_by_pubkey(self, public_key: bytes, now: int) -> Optional[CertificateLookup]:
        return self.find_certificate_by_key_hash(digest(public_key), now)

    def find_certificate_by_key_hash(self, key_hash: bytes, now: int) -> Optional[CertificateLookup]:
        """Search the issuance database for a key; revoked matches are flagged."""
        serials = self._by_key_hash.get(key_hash, [])
        if not serials:
            return None
        live = [s for s in serials if self._is_live(self._issued[s].certificate, now)]
        serial = live[-1] if live else serials[-1]
        record = self._issued[serial]
        status = CertStatus.REVOKED if serial in self._revoked else CertStatus.GOOD
        shared = {
            k: v
            for k, v in sorted(record.registration.submitted_attributes.items())
            if k in self._disclosure
        }
        return CertificateLookup(certificate=record.certificate, attributes=shared, status=status)

    def registered_attributes(self, serial: bytes) -> Mapping[str, str]:
        return self._issued[serial].registration.submitted_attributes

    def issued_serials(self) -> list[bytes]:
        return sorted(self._issued)

    def revoked_serials(self) -> frozenset[bytes]:
        return frozenset(self._revoked)
