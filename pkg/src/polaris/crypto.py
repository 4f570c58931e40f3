"""Deterministic cryptographic primitives shared by every other module.

One identity keypair backs both capabilities a participant needs:

* **Signing** — Ed25519 (deterministic signatures, 32-byte keys).
* **Key transport** — RSA-OAEP(SHA-256), used exclusively to move small
  symmetric-key material to a peer; payloads are hard-capped by the modulus.

The two public halves are packaged into a single ``public_key`` blob so a
registry entry stays one key with one algorithm tag.

Attribute commitments are salted SHA-256 digests over a length-prefixed
encoding of (name, value, salt).  The length prefixes make distinct field
splits produce distinct preimages, which plain concatenation does not.

All functions are pure or draw only on OS randomness; there is no shared
mutable state beyond the asymmetric-operation counter used by benchmarks.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import struct
import threading
from dataclasses import dataclass, field
from datetime import datetime
from functools import lru_cache

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding as rsa_padding
from cryptography.hazmat.primitives.asymmetric import rsa
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .encoding import b64decode, b64encode, canonical_json, utcnow
from .errors import DecryptionError, InvalidInput, SealedPayloadTooLarge

ALGORITHM = "ed25519+rsa2048"

SALT_LENGTH = 16
DIGEST_LENGTH = 32
SIGNATURE_LENGTH = 64
AEAD_NONCE_LENGTH = 12

RSA_KEY_BITS = 2048
# OAEP-SHA256 bound: modulus bytes - 2*hash - 2.
SEAL_PAYLOAD_LIMIT = RSA_KEY_BITS // 8 - 2 * 32 - 2

DEFAULT_KDF_ITERATIONS = 10_000
SUPPORTED_KEY_SIZES = (16, 32)

_OAEP = rsa_padding.OAEP(
    mgf=rsa_padding.MGF1(algorithm=hashes.SHA256()),
    algorithm=hashes.SHA256(),
    label=None,
)


@dataclass(frozen=True)
class KeyPair:
    """Identity keypair: signing plus key-transport halves in one blob."""

    public_key: bytes
    private_key: bytes
    algorithm: str = ALGORITHM


@dataclass(frozen=True)
class SymmetricKey:
    """Symmetric key material produced by :func:`derive_key`."""

    material: bytes = field(repr=False)
    created_at: datetime = field(default_factory=utcnow)


def generate_keypair() -> KeyPair:
    """Generate a fresh identity keypair (Ed25519 + RSA transport key)."""
    ed_private = Ed25519PrivateKey.generate()
    rsa_private = rsa.generate_private_key(
        public_exponent=65537, key_size=RSA_KEY_BITS
    )
    public_blob = canonical_json(
        {
            "seal": b64encode(
                rsa_private.public_key().public_bytes(
                    serialization.Encoding.DER,
                    serialization.PublicFormat.SubjectPublicKeyInfo,
                )
            ),
            "sign": b64encode(
                ed_private.public_key().public_bytes(
                    serialization.Encoding.Raw, serialization.PublicFormat.Raw
                )
            ),
        }
    )
    private_blob = canonical_json(
        {
            "seal": b64encode(
                rsa_private.private_bytes(
                    serialization.Encoding.DER,
                    serialization.PrivateFormat.PKCS8,
                    serialization.NoEncryption(),
                )
            ),
            "sign": b64encode(
                ed_private.private_bytes(
                    serialization.Encoding.Raw,
                    serialization.PrivateFormat.Raw,
                    serialization.NoEncryption(),
                )
            ),
        }
    )
    return KeyPair(public_key=public_blob, private_key=private_blob)


def _split_blob(blob: bytes, *, what: str) -> dict:
    try:
        parts = json.loads(blob.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise InvalidInput(f"{what} is not a valid key blob") from exc
    if not isinstance(parts, dict) or "sign" not in parts or "seal" not in parts:
        raise InvalidInput(f"{what} is missing sign/seal components")
    return parts


@lru_cache(maxsize=512)
def _load_sign_public(blob: bytes) -> Ed25519PublicKey:
    raw = b64decode(_split_blob(blob, what="public key")["sign"], what="sign key")
    try:
        return Ed25519PublicKey.from_public_bytes(raw)
    except (ValueError, TypeError) as exc:
        raise InvalidInput("malformed signing public key") from exc


@lru_cache(maxsize=512)
def _load_sign_private(blob: bytes) -> Ed25519PrivateKey:
    raw = b64decode(_split_blob(blob, what="private key")["sign"], what="sign key")
    try:
        return Ed25519PrivateKey.from_private_bytes(raw)
    except (ValueError, TypeError) as exc:
        raise InvalidInput("malformed signing private key") from exc


@lru_cache(maxsize=512)
def _load_seal_public(blob: bytes):
    der = b64decode(_split_blob(blob, what="public key")["seal"], what="seal key")
    try:
        key = serialization.load_der_public_key(der)
    except (ValueError, TypeError) as exc:
        raise InvalidInput("malformed transport public key") from exc
    if not isinstance(key, rsa.RSAPublicKey):
        raise InvalidInput("transport public key is not RSA")
    return key


@lru_cache(maxsize=512)
def _load_seal_private(blob: bytes):
    der = b64decode(_split_blob(blob, what="private key")["seal"], what="seal key")
    try:
        key = serialization.load_der_private_key(der, password=None)
    except (ValueError, TypeError) as exc:
        raise InvalidInput("malformed transport private key") from exc
    if not isinstance(key, rsa.RSAPrivateKey):
        raise InvalidInput("transport private key is not RSA")
    return key


def validate_public_key(public_key: bytes) -> None:
    """Raise InvalidInput unless the blob parses into both key halves.

    Deliberately bypasses the parse caches: registration-style validation
    sees a fresh key every time, so cached parses would misrepresent its
    cost and, worse, let a poisoned cache entry skip validation.
    """
    _load_sign_public.__wrapped__(public_key)
    _load_seal_public.__wrapped__(public_key)


def sign(message: bytes, private_key: bytes) -> bytes:
    """Sign a message; deterministic for a fixed (message, key)."""
    return _load_sign_private(private_key).sign(message)


def verify(message: bytes, signature: bytes, public_key: bytes) -> bool:
    """True iff ``signature`` was produced over exactly ``message``.

    Malformed keys or signatures raise InvalidInput; a well-formed signature
    that does not match returns False.
    """
    if not isinstance(signature, (bytes, bytearray)):
        raise InvalidInput("signature must be bytes")
    if len(signature) != SIGNATURE_LENGTH:
        raise InvalidInput(
            f"signature must be {SIGNATURE_LENGTH} bytes, got {len(signature)}"
        )
    key = _load_sign_public(public_key)
    try:
        key.verify(bytes(signature), message)
        return True
    except InvalidSignature:
        return False


def generate_salt() -> bytes:
    """Fresh 16-byte salt from the OS CSPRNG."""
    return secrets.token_bytes(SALT_LENGTH)


def commit_attribute(name: str, value: str, salt: bytes) -> bytes:
    """Salted commitment digest binding an attribute name to its value.

    Each field is prefixed with its 4-byte big-endian length before hashing,
    so ("ab","c") and ("a","bc") can never share a preimage.
    """
    if not name:
        raise InvalidInput("attribute name must be nonempty")
    if value is None or salt is None:
        raise InvalidInput("attribute value and salt are required")
    name_bytes = name.encode("utf-8")
    value_bytes = value.encode("utf-8")
    preimage = (
        struct.pack(">I", len(name_bytes))
        + name_bytes
        + struct.pack(">I", len(value_bytes))
        + value_bytes
        + struct.pack(">I", len(salt))
        + bytes(salt)
    )
    return hashlib.sha256(preimage).digest()


def derive_key(
    password: bytes,
    salt: bytes,
    key_size: int = 32,
    iterations: int = DEFAULT_KDF_ITERATIONS,
) -> SymmetricKey:
    """PBKDF2-HMAC-SHA256 key derivation; deterministic in all inputs."""
    if iterations < 1:
        raise InvalidInput("iterations must be >= 1")
    if key_size not in SUPPORTED_KEY_SIZES:
        raise InvalidInput(f"key_size must be one of {SUPPORTED_KEY_SIZES}")
    material = hashlib.pbkdf2_hmac("sha256", bytes(password), bytes(salt), iterations, key_size)
    return SymmetricKey(material=material)


def seal_symmetric(plaintext: bytes, key: SymmetricKey, aad: bytes | None = None) -> bytes:
    """AES-GCM (256-bit for default-size keys) with a fresh random nonce
    prepended to the ciphertext."""
    nonce = secrets.token_bytes(AEAD_NONCE_LENGTH)
    return nonce + AESGCM(key.material).encrypt(nonce, plaintext, aad)


def open_symmetric(ciphertext: bytes, key: SymmetricKey, aad: bytes | None = None) -> bytes:
    """Open an AEAD envelope; raises DecryptionError on tamper or wrong key."""
    if len(ciphertext) < AEAD_NONCE_LENGTH + 16:
        raise DecryptionError("ciphertext too short")
    nonce, body = ciphertext[:AEAD_NONCE_LENGTH], ciphertext[AEAD_NONCE_LENGTH:]
    try:
        return AESGCM(key.material).decrypt(nonce, body, aad)
    except InvalidTag as exc:
        raise DecryptionError("authentication failed") from exc


_asym_lock = threading.Lock()
_asym_ops = 0


def _count_asym_op() -> None:
    global _asym_ops
    with _asym_lock:
        _asym_ops += 1


def asymmetric_op_count() -> int:
    """Total seal/open asymmetric operations performed by this process.

    Benchmarks and tests take deltas around the code under measurement.
    """
    with _asym_lock:
        return _asym_ops


def seal_asymmetric(payload: bytes, recipient_public_key: bytes) -> bytes:
    """Encrypt a small payload so only the recipient's private key opens it.

    Intended solely for symmetric-key material; payloads above
    SEAL_PAYLOAD_LIMIT bytes are rejected.
    """
    if len(payload) > SEAL_PAYLOAD_LIMIT:
        raise SealedPayloadTooLarge(
            f"payload of {len(payload)} bytes exceeds the "
            f"{SEAL_PAYLOAD_LIMIT}-byte transport limit"
        )
    key = _load_seal_public(recipient_public_key)
    _count_asym_op()
    return key.encrypt(bytes(payload), _OAEP)


def open_asymmetric(ciphertext: bytes, private_key: bytes) -> bytes:
    """Recover a sealed payload; raises DecryptionError with the wrong key."""
    key = _load_seal_private(private_key)
    _count_asym_op()
    try:
        return key.decrypt(bytes(ciphertext), _OAEP)
    except ValueError as exc:
        raise DecryptionError("asymmetric decryption failed") from exc
