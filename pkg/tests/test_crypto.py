"""Crypto primitives against published vectors and an independent oracle.

Expected values below were cross-checked before the build against two
independent Ed25519 implementations (the cryptography library and the pure
Python reference in ed25519_ref.py) and against the published RFC 8032 /
FIPS 180 vectors.
"""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ed25519_ref
from vaspnet import crypto
from vaspnet.crypto import (
    InvalidSeed,
    MalformedRecord,
    NonCanonicalOrder,
    canonical_decode,
    canonical_encode,
    decode_str_map,
    digest,
    encode_str_map,
    generate_keypair,
    sign,
    verify,
)

# RFC 8032 section 7.1, tests 1-3: (secret, public, message, signature)
RFC8032_VECTORS = [
    ("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60",
     "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a",
     "",
     "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"),
    ("4ccd089b28ff96da9db6c346ec114e0f5b8a319f35aba624da8cf6ed4fb8a6fb",
     "3d4017c3e843895a92b70aa74d1b7ebc9c982ccf2ec4968cc0cd55f12af4660c",
     "72",
     "92a009a9f0d4cab8720e820b5f642540a2b27b5416503f8fb3762223ebdb69da085ac1e43e15996e458f3613d0f11d8c387b2eaeb4302aeeb00d291612bb0c00"),
    ("c5aa8df43f9f837bedb7442f31dcb7b166d38535076f094b85ce3a2e0b4458f7",
     "fc51cd8e6218a1a38da47ed00230f0580816ed13ba3303ac5deb911548908025",
     "af82",
     "6291d657deec24024827e69c3abe01a30ce548a284743a445e3680d7db5ac3ac18ff9b538d16f290ae67f760984dc6594a7c15e9716ed28dc027beceea1ec40a"),
]

# Public key for the all-zero 32-byte seed, from the standard test-vector suite.
ZERO_SEED_PUBLIC = "3b6a27bcceb6a42d62a3a8d02a6f0d73653215771de243a63ac048a18b59da29"

# FIPS 180-4 / NIST example digests.
SHA256_VECTORS = [
    (b"", "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"),
    (b"abc", "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
    (b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
     "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1"),
]


class TestKeypairs:
    def test_zero_seed_matches_published_public_key(self):
        pair = generate_keypair(bytes(32))
        assert pair.public_key.hex() == ZERO_SEED_PUBLIC

    @pytest.mark.parametrize("sk_hex,pk_hex,msg_hex,sig_hex", RFC8032_VECTORS)
    def test_rfc8032_vectors(self, sk_hex, pk_hex, msg_hex, sig_hex):
        pair = generate_keypair(bytes.fromhex(sk_hex))
        message = bytes.fromhex(msg_hex)
        assert pair.public_key.hex() == pk_hex
        signature = sign(pair, message)
        assert signature.hex() == sig_hex
        assert verify(pair.public_key, message, signature)

    @pytest.mark.parametrize("sk_hex,pk_hex,msg_hex,sig_hex", RFC8032_VECTORS)
    def test_vectors_against_independent_oracle(self, sk_hex, pk_hex, msg_hex, sig_hex):
        seed = bytes.fromhex(sk_hex)
        message = bytes.fromhex(msg_hex)
        assert ed25519_ref.publickey(seed).hex() == pk_hex
        assert ed25519_ref.sign(seed, message).hex() == sig_hex
        assert ed25519_ref.verify(bytes.fromhex(pk_hex), message, bytes.fromhex(sig_hex))

    def test_library_and_oracle_agree_on_random_inputs(self):
        rng = random.Random(0xC0FFEE)
        for _ in range(6):
            seed = rng.randbytes(32)
            message = rng.randbytes(rng.randrange(0, 64))
            pair = generate_keypair(seed)
            signature = sign(pair, message)
            assert pair.public_key == ed25519_ref.publickey(seed)
            assert signature == ed25519_ref.sign(seed, message)
            assert ed25519_ref.verify(pair.public_key, message, signature)

    def test_same_seed_same_keypair(self):
        seed = digest(b"replay")
        assert generate_keypair(seed) == generate_keypair(seed)

    def test_distinct_seeds_distinct_public_keys(self):
        rng = random.Random(7)
        seen = set()
        for _ in range(100):
            seen.add(generate_keypair(rng.randbytes(32)).public_key)
        assert len(seen) == 100

    @pytest.mark.parametrize("bad", [b"", b"short", bytes(31), bytes(33)])
    def test_bad_seed_rejected(self, bad):
        with pytest.raises(InvalidSeed):
            generate_keypair(bad)


class TestSignVerify:
    def test_sign_verify_roundtrip(self):
        pair = generate_keypair(digest(b"signer"))
        assert verify(pair.public_key, b"hello", sign(pair, b"hello"))

    def test_wrong_public_key_fails(self):
        pair = generate_keypair(digest(b"one"))
        other = generate_keypair(digest(b"two"))
        assert not verify(other.public_key, b"hello", sign(pair, b"hello"))

    def test_signature_deterministic(self):
        pair = generate_keypair(digest(b"det"))
        assert sign(pair, b"msg") == sign(pair, b"msg")

    def test_single_bit_flip_breaks_verification(self):
        rng = random.Random(99)
        pair = generate_keypair(digest(b"flip"))
        message = rng.randbytes(48)
        signature = sign(pair, message)
        for _ in range(64):
            bit = rng.randrange(len(message) * 8)
            mutated = bytearray(message)
            mutated[bit // 8] ^= 1 << (bit % 8)
            assert not verify(pair.public_key, bytes(mutated), signature)

    def test_truncated_signature_false_not_raise(self):
        pair = generate_keypair(digest(b"trunc"))
        signature = sign(pair, b"m")
        assert verify(pair.public_key, b"m", signature[:63]) is False
        assert verify(b"not-a-key", b"m", signature) is False
        assert verify(pair.public_key, b"m", b"") is False


class TestDigest:
    @pytest.mark.parametrize("data,expected", SHA256_VECTORS)
    def test_published_vectors(self, data, expected):
        assert digest(data).hex() == expected

    def test_one_bit_change_changes_digest(self):
        rng = random.Random(5)
        for _ in range(100):
            data = rng.randbytes(rng.randrange(1, 64))
            bit = rng.randrange(len(data) * 8)
            mutated = bytearray(data)
            mutated[bit // 8] ^= 1 << (bit % 8)
            assert digest(data) != digest(bytes(mutated))


record_values = st.binary(max_size=40)
records = st.lists(record_values, max_size=8).map(
    lambda values: [(i + 1, v) for i, v in enumerate(values)]
)


class TestCanonicalEncoding:
    def test_empty_record(self):
        assert canonical_encode([]) == b""
        assert canonical_decode(b"") == []

    def test_stated_layout(self):
        assert canonical_encode([(1, b"AB")]) == bytes.fromhex("000100000002") + b"AB"

    def test_non_increasing_tags_rejected(self):
        with pytest.raises(NonCanonicalOrder):
            canonical_encode([(2, b"a"), (2, b"b")])
        with pytest.raises(NonCanonicalOrder):
            canonical_encode([(3, b"a"), (1, b"b")])

    def test_truncated_rejected(self):
        encoded = canonical_encode([(1, b"abcdef")])
        with pytest.raises(MalformedRecord):
            canonical_decode(encoded[:-1])
        with pytest.raises(MalformedRecord):
            canonical_decode(encoded[:3])

    @given(records)
    def test_roundtrip(self, fields):
        assert canonical_decode(canonical_encode(fields)) == fields

    @given(records, records)
    @settings(max_examples=200)
    def test_injective(self, a, b):
        if a != b:
            assert canonical_encode(a) != canonical_encode(b)

    def test_injectivity_bulk_random(self):
        rng = random.Random(11)
        seen = {}
        for _ in range(10_000):
            fields = [(i + 1, rng.randbytes(rng.randrange(0, 6)))
                      for i in range(rng.randrange(0, 5))]
            encoded = canonical_encode(fields)
            if encoded in seen:
                assert seen[encoded] == fields
            seen[encoded] = fields

    @given(st.dictionaries(st.text(max_size=8), st.text(max_size=8), max_size=6))
    def test_str_map_roundtrip(self, mapping):
        assert decode_str_map(encode_str_map(mapping)) == mapping

    def test_str_map_order_canonical(self):
        a = encode_str_map({"x": "1", "a": "2"})
        b = encode_str_map({"a": "2", "x": "1"})
        assert a == b
