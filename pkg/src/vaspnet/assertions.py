"""VASP-signed customer attribute assertions, hash-linked to certificates.

An assertion bundles customer attributes, is signed by the issuing VASP, and
links to the customer's public-key certificate by the digest of the full
certificate bytes. Disclosure filtering produces a fresh assertion re-signed
by the filtering VASP so recipients can hold the discloser accountable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from . import crypto
from .ca import Certificate, ValidationResult
from .crypto import (
    KeyPair,
    canonical_decode,
    canonical_encode,
    dec_str,
    dec_u64,
    decode_str_map,
    digest,
    enc_str,
    enc_u64,
    encode_str_map,
)

ASSERTION_ID_LEN = 16

# The attribute names a travel-rule disclosure carries. Amounts and execution
# dates travel in the transfer notice, not in the identity assertion.
TRAVEL_RULE_ATTRIBUTES = frozenset(
    {"name", "account_id", "address", "vasp_id", "public_key_hash", "custody_model"}
)

# The floor a counterparty may insist on; address is disclosed when known but
# not every registration carries one.
REQUIRED_TRAVEL_RULE_CORE = frozenset(
    {"name", "account_id", "vasp_id", "public_key_hash", "custody_model"}
)


class AssertionServiceError(Exception):
    pass


class SubjectCertInvalid(AssertionServiceError):
    pass


class EmptyDisclosure(AssertionServiceError):
    pass


class AttributeNotRegistered(AssertionServiceError):
    pass


@dataclass(frozen=True)
class DisclosurePolicy:
    """Names of attributes a VASP is willing to pass on."""

    allowed_attributes: frozenset[str]

    def __post_init__(self) -> None:
        if not self.allowed_attributes:
            raise ValueError("disclosure policy must allow at least one attribute")


TRAVEL_RULE_POLICY = DisclosurePolicy(TRAVEL_RULE_ATTRIBUTES)


@dataclass(frozen=True)
class AttributeAssertion:
    assertion_id: bytes
    issuer_vasp_id: str
    subject_id: str
    linked_certificate_hash: bytes
    attributes: Mapping[str, str]
    issued_at: int
    vasp_signature: bytes

    def signed_payload(self) -> bytes:
        return canonical_encode([
            (1, self.assertion_id),
            (2, enc_str(self.issuer_vasp_id)),
            (3, enc_str(self.subject_id)),
            (4, self.linked_certificate_hash),
            (5, encode_str_map(self.attributes)),
            (6, enc_u64(self.issued_at)),
        ])

    def to_bytes(self) -> bytes:
        return self.signed_payload() + canonical_encode([(7, self.vasp_signature)])

    @classmethod
    def from_bytes(cls, data: bytes) -> "AttributeAssertion":
        fields = dict(canonical_decode(data))
        return cls(
            assertion_id=fields[1],
            issuer_vasp_id=dec_str(fields[2]),
            subject_id=dec_str(fields[3]),
            linked_certificate_hash=fields[4],
            attributes=decode_str_map(fields[5]),
            issued_at=dec_u64(fields[6]),
            vasp_signature=fields[7],
        )

    def dump_lines(self) -> list[str]:
        lines = [
            f"assertion_id={self.assertion_id.hex()}",
            f"issuer_vasp_id={self.issuer_vasp_id}",
            f"subject_id={self.subject_id}",
            f"linked_certificate_hash={self.linked_certificate_hash.hex()}",
            f"issued_at={self.issued_at}",
        ]
        lines += [f"attr.{k}={v}" for k, v in sorted(self.attributes.items())]
        return lines


def issue_assertion(
    signing_key: KeyPair,
    issuer_vasp_id: str,
    subject_id: str,
    subject_certificate: Certificate,
    attributes: Mapping[str, str],
    registered_attributes: Mapping[str, str],
    validator: Callable[[Certificate], ValidationResult],
    assertion_id: bytes,
    issued_at: int,
) -> AttributeAssertion:
    """Sign an attribute bundle about a certified subject.

    The subject certificate must validate, and every asserted attribute must
    already be registered for the account (a VASP attests only what it holds).
    """
    result = validator(subject_certificate)
    if not result.ok:
        raise SubjectCertInvalid(f"{result.status.value}: {result.detail}")
    unknown = set(attributes) - set(registered_attributes)
    if unknown:
        raise AttributeNotRegistered(",".join(sorted(unknown)))
    unsigned = AttributeAssertion(
        assertion_id=assertion_id,
        issuer_vasp_id=issuer_vasp_id,
        subject_id=subject_id,
        linked_certificate_hash=digest(subject_certificate.to_bytes()),
        attributes=dict(attributes),
        issued_at=issued_at,
        vasp_signature=b"",
    )
    signature = crypto.sign(signing_key, unsigned.signed_payload())
    return AttributeAssertion(**{**unsigned.__dict__, "vasp_signature": signature})


def verify_assertion(
    assertion: AttributeAssertion,
    issuer_vasp_certificate: Certificate,
    subject_certificate: Certificate,
    validator: Callable[[Certificate], ValidationResult],
) -> bool:
    """True iff the signature, the certificate link, and the issuer cert all hold."""
    if not crypto.verify(
        issuer_vasp_certificate.subject_public_key,
        assertion.signed_payload(),
        assertion.vasp_signature,
    ):
        return False
    if assertion.linked_certificate_hash != digest(subject_certificate.to_bytes()):
        return False
    return validator(issuer_vasp_certificate).ok


def filter_attributes(
    assertion: AttributeAssertion,
    policy: DisclosurePolicy,
    signing_key: KeyPair,
    discloser_vasp_id: str,
    assertion_id: bytes,
    issued_at: int,
) -> AttributeAssertion:
    """Produce a new assertion restricted to the policy's attribute names.

    The output is re-signed by the discloser; the input is untouched. An empty
    intersection is an error rather than an empty disclosure.
    """
    kept = {k: v for k, v in assertion.attributes.items() if k in policy.allowed_attributes}
    if not kept:
        raise EmptyDisclosure(
            f"no overlap between {sorted(assertion.attributes)} and policy"
        )
    unsigned = AttributeAssertion(
        assertion_id=assertion_id,
        issuer_vasp_id=discloser_vasp_id,
        subject_id=assertion.subject_id,
        linked_certificate_hash=assertion.linked_certificate_hash,
        attributes=kept,
        issued_at=issued_at,
        vasp_signature=b"",
    )
    signature = crypto.sign(signing_key, unsigned.signed_payload())
    return AttributeAssertion(**{**unsigned.__dict__, "vasp_signature": signature})
