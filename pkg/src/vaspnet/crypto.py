"""Deterministic crypto primitives and the canonical byte encoding.

Every signed structure in the stack serializes through ``canonical_encode``
so signatures and digests are bit-exact across runs. Signatures are Ed25519
(deterministic, 64 bytes); digests are SHA-256 (32 bytes). Key generation is
seeded, never from OS randomness, so simulations replay exactly.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

HASH_LEN = 32
KEY_LEN = 32
SIGNATURE_LEN = 64

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw


class CryptoError(Exception):
    """Base class for crypto and encoding failures."""


class InvalidSeed(CryptoError):
    """Seed or private key material has the wrong length."""


class NonCanonicalOrder(CryptoError):
    """Record field tags are not strictly increasing."""


class MalformedRecord(CryptoError):
    """Byte string is not a valid canonical record encoding."""


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 keypair; ``private_key`` is the 32-byte seed."""

    public_key: bytes
    private_key: bytes

    @property
    def public_key_hash(self) -> bytes:
        return digest(self.public_key)


def generate_keypair(seed: bytes) -> KeyPair:
    """Derive an Ed25519 keypair from a 32-byte seed, deterministically."""
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != KEY_LEN:
        raise InvalidSeed(f"seed must be exactly {KEY_LEN} bytes")
    sk = Ed25519PrivateKey.from_private_bytes(bytes(seed))
    public = sk.public_key().public_bytes(_RAW, _RAW_PUB)
    return KeyPair(public_key=public, private_key=bytes(seed))


def keypair_from_label(namespace: str, label: str) -> KeyPair:
    """Derive a keypair from a string label (seed = SHA-256 of the label).

    Used by the harness so actor keys depend only on (seed, name), not on
    construction order.
    """
    return generate_keypair(digest(f"{namespace}:{label}".encode()))


def sign(private_key: bytes | KeyPair, message: bytes) -> bytes:
    """Produce the 64-byte deterministic Ed25519 signature."""
    if isinstance(private_key, KeyPair):
        private_key = private_key.private_key
    if len(private_key) != KEY_LEN:
        raise InvalidSeed(f"private key must be exactly {KEY_LEN} bytes")
    return Ed25519PrivateKey.from_private_bytes(private_key).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` is valid for (public_key, message).

    Malformed inputs of any kind return False; this never raises.
    """
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


def digest(data: bytes) -> bytes:
    """SHA-256 of the input (32 bytes)."""
    return hashlib.sha256(data).digest()


# ---------------------------------------------------------------------------
# Canonical TLV records
# ---------------------------------------------------------------------------
# Layout per field: tag as 2-byte big-endian, value length as 4-byte
# big-endian, value bytes. Tags strictly increasing within a record, which
# makes the encoding injective and order-canonical.

_MAX_TAG = 0xFFFF
_MAX_LEN = 0xFFFFFFFF


def canonical_encode(fields: Sequence[tuple[int, bytes]]) -> bytes:
    out = bytearray()
    prev = -1
    for tag, value in fields:
        if tag <= prev:
            raise NonCanonicalOrder(f"tag {tag} after {prev}")
        if not 0 <= tag <= _MAX_TAG:
            raise MalformedRecord(f"tag {tag} out of range")
        if len(value) > _MAX_LEN:
            raise MalformedRecord("value too long")
        out += struct.pack(">HI", tag, len(value))
        out += value
        prev = tag
    return bytes(out)


def canonical_decode(data: bytes) -> list[tuple[int, bytes]]:
    """Inverse of canonical_encode; rejects anything encode cannot emit."""
    fields: list[tuple[int, bytes]] = []
    pos = 0
    prev = -1
    while pos < len(data):
        if pos + 6 > len(data):
            raise MalformedRecord("truncated field header")
        tag, length = struct.unpack_from(">HI", data, pos)
        pos += 6
        if pos + length > len(data):
            raise MalformedRecord("truncated field value")
        if tag <= prev:
            raise NonCanonicalOrder(f"tag {tag} after {prev}")
        fields.append((tag, bytes(data[pos:pos + length])))
        pos += length
        prev = tag
    return fields


def enc_u64(value: int) -> bytes:
    if value < 0:
        raise MalformedRecord("unsigned field is negative")
    return struct.pack(">Q", value)


def dec_u64(data: bytes) -> int:
    if len(data) != 8:
        raise MalformedRecord("u64 field must be 8 bytes")
    return struct.unpack(">Q", data)[0]


def enc_str(value: str) -> bytes:
    return value.encode("utf-8")


def dec_str(data: bytes) -> str:
    return data.decode("utf-8")


def encode_str_map(mapping: Mapping[str, str]) -> bytes:
    """Encode a string map canonically: pairs sorted by key, tags 1,2,3...."""
    fields: list[tuple[int, bytes]] = []
    tag = 1
    for key in sorted(mapping):
        fields.append((tag, enc_str(key)))
        fields.append((tag + 1, enc_str(mapping[key])))
        tag += 2
    return canonical_encode(fields)


def decode_str_map(data: bytes) -> dict[str, str]:
    fields = canonical_decode(data)
    if len(fields) % 2 != 0:
        raise MalformedRecord("map encoding must have an even field count")
    out: dict[str, str] = {}
    for i in range(0, len(fields), 2):
        out[dec_str(fields[i][1])] = dec_str(fields[i + 1][1])
    return out


def encode_bytes_list(items: Iterable[bytes]) -> bytes:
    """Encode a sequence of byte strings as a record with tags 1..n."""
    return canonical_encode([(i + 1, item) for i, item in enumerate(items)])


def decode_bytes_list(data: bytes) -> list[bytes]:
    return [value for _, value in canonical_decode(data)]
