"""Crypto primitive contracts: signatures, commitments, KDF, AEAD, transport."""

import hashlib
import itertools
import struct

import pytest
from hypothesis import given, settings, strategies as st

from polaris import crypto
from polaris.errors import DecryptionError, InvalidInput, SealedPayloadTooLarge


# ----------------------------------------------------------------------
# Keypairs and signatures
# ----------------------------------------------------------------------


def test_sign_verify_roundtrip(keypool):
    keys = keypool("crypto-a")
    message = b"arbitrary message"
    signature = crypto.sign(message, keys.private_key)
    assert crypto.verify(message, signature, keys.public_key)


def test_fresh_keypairs_are_distinct():
    assert crypto.generate_keypair().public_key != crypto.generate_keypair().public_key


def test_verify_with_wrong_key_is_false(keypool):
    a, b = keypool("crypto-a"), keypool("crypto-b")
    signature = crypto.sign(b"m", a.private_key)
    assert crypto.verify(b"m", signature, b.public_key) is False


def test_message_bitflip_fails_verification(keypool):
    keys = keypool("crypto-a")
    signature = crypto.sign(b"message", keys.private_key)
    tampered = bytes([b"message"[0] ^ 0x01]) + b"message"[1:]
    assert crypto.verify(tampered, signature, keys.public_key) is False


def test_signature_bitflip_fails_verification(keypool):
    keys = keypool("crypto-a")
    signature = bytearray(crypto.sign(b"message", keys.private_key))
    signature[0] ^= 0x01
    assert crypto.verify(b"message", bytes(signature), keys.public_key) is False


def test_malformed_signature_raises_not_false(keypool):
    keys = keypool("crypto-a")
    with pytest.raises(InvalidInput):
        crypto.verify(b"m", b"too-short", keys.public_key)


def test_malformed_key_raises(keypool):
    keys = keypool("crypto-a")
    signature = crypto.sign(b"m", keys.private_key)
    with pytest.raises(InvalidInput):
        crypto.verify(b"m", signature, b"not a key blob")


def test_validate_public_key(keypool):
    crypto.validate_public_key(keypool("crypto-a").public_key)
    with pytest.raises(InvalidInput):
        crypto.validate_public_key(b"{}")


@settings(max_examples=1000, deadline=None)
@given(message=st.binary(min_size=0, max_size=2048))
def test_sign_verify_property(message):
    keys = _property_keys()
    signature = crypto.sign(message, keys.private_key)
    assert crypto.verify(message, signature, keys.public_key)


def _property_keys(_cache=[]):
    if not _cache:
        _cache.append(crypto.generate_keypair())
    return _cache[0]


# ----------------------------------------------------------------------
# Commitments
# ----------------------------------------------------------------------


def test_commitment_deterministic():
    salt = b"s" * 16
    assert crypto.commit_attribute("degree", "PhD", salt) == crypto.commit_attribute(
        "degree", "PhD", salt
    )


def test_commitment_binds_value():
    salt = b"s" * 16
    assert crypto.commit_attribute("degree", "PhD", salt) != crypto.commit_attribute(
        "degree", "MSc", salt
    )


def test_commitment_length():
    assert len(crypto.commit_attribute("a", "b", b"c")) == crypto.DIGEST_LENGTH


def test_commitment_field_split_distinct():
    # Computed independently: the length-prefix layout is a frozen format.
    salt = bytes(range(16))

    def reference(name: str, value: str, s: bytes) -> bytes:
        parts = b""
        for chunk in (name.encode(), value.encode(), s):
            parts += struct.pack(">I", len(chunk)) + chunk
        return hashlib.sha256(parts).digest()

    left = crypto.commit_attribute("ab", "c", salt)
    right = crypto.commit_attribute("a", "bc", salt)
    assert left == reference("ab", "c", salt)
    assert right == reference("a", "bc", salt)
    assert left != right


def test_commitment_rejects_empty_name():
    with pytest.raises(InvalidInput):
        crypto.commit_attribute("", "v", b"s")


def test_commitment_field_binding_enumeration():
    """No collisions across any distinct short (name, value, salt) triples."""
    alphabet = "ab"
    strings = [""] + [
        "".join(p)
        for n in range(1, 5)
        for p in itertools.product(alphabet, repeat=n)
    ]
    names = [s for s in strings if s]
    seen: dict[bytes, tuple] = {}
    for name in names:
        for value in strings:
            for salt_text in strings:
                salt = salt_text.encode()
                digest = crypto.commit_attribute(name, value, salt)
                triple = (name, value, salt)
                assert seen.setdefault(digest, triple) == triple, (
                    f"collision between {seen[digest]} and {triple}"
                )


@settings(max_examples=200, deadline=None)
@given(
    name=st.text(min_size=1, max_size=20),
    value=st.text(max_size=20),
    salt=st.binary(min_size=0, max_size=24),
)
def test_commitment_deterministic_property(name, value, salt):
    assert crypto.commit_attribute(name, value, salt) == crypto.commit_attribute(
        name, value, salt
    )


# ----------------------------------------------------------------------
# Key derivation
# ----------------------------------------------------------------------

# Reference vectors for PBKDF2-HMAC-SHA256, cross-checked against two
# independent implementations before freezing.
PBKDF2_VECTORS = [
    (b"password", b"salt", 1, 32,
     "120fb6cffcf8b32c43e7225256c4f837a86548c92ccc35480805987cb70be17b"),
    (b"password", b"salt", 2, 32,
     "ae4d0c95af6b46d32d0adff928f06dd02a303f8ef3c251dfd6e2d85a95474c43"),
    (b"password", b"salt", 4096, 32,
     "c5e478d59288c841aa530db6845c4c8d962893a001ce4e11a4963873aa98134a"),
    (b"passwordPASSWORDpassword", b"saltSALTsaltSALTsaltSALTsaltSALTsalt", 4096, 32,
     "348c89dbcbd32b2f32d814b8116e84cf2b17347ebc1800181c4e2a1fb8dd53e1"),
]


@pytest.mark.parametrize("password,salt,iterations,size,expected", PBKDF2_VECTORS)
def test_kdf_known_answers(password, salt, iterations, size, expected):
    derived = crypto.derive_key(password, salt, key_size=size, iterations=iterations)
    assert derived.material.hex() == expected


def test_kdf_deterministic_and_sized():
    a = crypto.derive_key(b"p", b"s" * 16, key_size=32, iterations=10_000)
    b = crypto.derive_key(b"p", b"s" * 16, key_size=32, iterations=10_000)
    assert a.material == b.material
    assert len(a.material) == 32
    assert len(crypto.derive_key(b"p", b"s", key_size=16).material) == 16


def test_kdf_matches_independent_implementation():
    from cryptography.hazmat.primitives import hashes
    from cryptography.hazmat.primitives.kdf.pbkdf2 import PBKDF2HMAC

    import os

    for _ in range(16):
        password, salt = os.urandom(12), os.urandom(16)
        iterations = 1 + int.from_bytes(os.urandom(1), "big")
        for size in (16, 32):
            mine = crypto.derive_key(password, salt, key_size=size,
                                     iterations=iterations).material
            kdf = PBKDF2HMAC(algorithm=hashes.SHA256(), length=size, salt=salt,
                             iterations=iterations)
            assert mine == kdf.derive(password)


def test_kdf_rejects_bad_parameters():
    with pytest.raises(InvalidInput):
        crypto.derive_key(b"p", b"s", iterations=0)
    with pytest.raises(InvalidInput):
        crypto.derive_key(b"p", b"s", key_size=24)


# ----------------------------------------------------------------------
# Symmetric AEAD
# ----------------------------------------------------------------------


def test_seal_open_roundtrip():
    key = crypto.derive_key(b"p", b"s" * 16)
    assert crypto.open_symmetric(crypto.seal_symmetric(b"hello", key), key) == b"hello"


def test_open_with_wrong_key_fails():
    key = crypto.derive_key(b"p", b"s" * 16)
    other = crypto.derive_key(b"q", b"s" * 16)
    sealed = crypto.seal_symmetric(b"hello", key)
    with pytest.raises(DecryptionError):
        crypto.open_symmetric(sealed, other)


def test_fresh_nonces_give_distinct_ciphertexts():
    key = crypto.derive_key(b"p", b"s" * 16)
    assert crypto.seal_symmetric(b"m", key) != crypto.seal_symmetric(b"m", key)


def test_tampered_ciphertext_fails():
    key = crypto.derive_key(b"p", b"s" * 16)
    sealed = bytearray(crypto.seal_symmetric(b"hello", key))
    sealed[-1] ^= 0x01
    with pytest.raises(DecryptionError):
        crypto.open_symmetric(bytes(sealed), key)


def test_aad_mismatch_fails():
    key = crypto.derive_key(b"p", b"s" * 16)
    sealed = crypto.seal_symmetric(b"hello", key, aad=b"header-1")
    with pytest.raises(DecryptionError):
        crypto.open_symmetric(sealed, key, aad=b"header-2")


@settings(max_examples=1000, deadline=None)
@given(payload=st.binary(max_size=4096), aad=st.one_of(st.none(), st.binary(max_size=64)))
def test_seal_open_property(payload, aad):
    key = crypto.derive_key(b"prop", b"s" * 16, iterations=1)
    assert crypto.open_symmetric(crypto.seal_symmetric(payload, key, aad), key, aad) == payload


# ----------------------------------------------------------------------
# Asymmetric transport
# ----------------------------------------------------------------------


def test_asymmetric_roundtrip(keypool):
    keys = keypool("crypto-a")
    sealed = crypto.seal_asymmetric(b"\x01" * 32, keys.public_key)
    assert crypto.open_asymmetric(sealed, keys.private_key) == b"\x01" * 32


def test_asymmetric_wrong_key_fails(keypool):
    a, b = keypool("crypto-a"), keypool("crypto-b")
    sealed = crypto.seal_asymmetric(b"\x01" * 32, a.public_key)
    with pytest.raises(DecryptionError):
        crypto.open_asymmetric(sealed, b.private_key)


def test_asymmetric_payload_limit(keypool):
    keys = keypool("crypto-a")
    crypto.seal_asymmetric(b"x" * crypto.SEAL_PAYLOAD_LIMIT, keys.public_key)
    with pytest.raises(SealedPayloadTooLarge):
        crypto.seal_asymmetric(b"x" * (crypto.SEAL_PAYLOAD_LIMIT + 1), keys.public_key)


def test_asymmetric_op_counter(keypool):
    keys = keypool("crypto-a")
    before = crypto.asymmetric_op_count()
    sealed = crypto.seal_asymmetric(b"k" * 32, keys.public_key)
    crypto.open_asymmetric(sealed, keys.private_key)
    assert crypto.asymmetric_op_count() - before == 2
