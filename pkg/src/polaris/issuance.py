"""Credential issuance: challenge-response proof of key possession,
salted-commitment claim construction, credential signing and verification.

The issuer signs canonical(metadata) followed by canonical(hashed claims);
the salts that open the commitments are delivered to the holder alongside
the credential but are never part of the signed body, otherwise publishing
the credential would reveal every attribute.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Iterable, Optional

from . import crypto
from .encoding import (
    b64decode,
    b64encode,
    canonical_json,
    from_timestamp,
    hexdecode,
    hexencode,
    to_timestamp,
    utcnow,
)
from .errors import InvalidInput, InvalidDid, NotFound
from .vdr import VdrClient, parse_did

CHALLENGE_TTL_SECONDS = 120.0
CHALLENGE_NONCE_LENGTH = 16


@dataclass(frozen=True)
class AttributeClaim:
    name: str
    value: str


@dataclass(frozen=True)
class Challenge:
    """Single-use nonce binding a holder DID to an issuance session."""

    nonce: bytes
    issued_at: datetime
    holder_did: str
    ttl: float = CHALLENGE_TTL_SECONDS

    def to_dict(self) -> dict:
        return {
            "nonce": hexencode(self.nonce),
            "issued_at": to_timestamp(self.issued_at),
            "holder_did": self.holder_did,
            "ttl": self.ttl,
        }

    def signing_bytes(self) -> bytes:
        return canonical_json(self.to_dict())

    def expired(self, now: datetime) -> bool:
        return now >= self.issued_at + timedelta(seconds=self.ttl)


@dataclass(frozen=True)
class ChallengeResponse:
    challenge: Challenge
    signature: bytes


def answer_challenge(challenge: Challenge, holder_private_key: bytes) -> ChallengeResponse:
    """Sign the canonical challenge to demonstrate key possession."""
    return ChallengeResponse(
        challenge=challenge,
        signature=crypto.sign(challenge.signing_bytes(), holder_private_key),
    )


@dataclass(frozen=True)
class CredentialMetadata:
    credential_id: str
    issuer_did: str
    holder_did: str
    issued_at: datetime
    expires_at: datetime
    schema: str

    def to_dict(self) -> dict:
        return {
            "credential_id": self.credential_id,
            "issuer_did": self.issuer_did,
            "holder_did": self.holder_did,
            "issued_at": to_timestamp(self.issued_at),
            "expires_at": to_timestamp(self.expires_at),
            "schema": self.schema,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CredentialMetadata":
        try:
            return cls(
                credential_id=data["credential_id"],
                issuer_did=data["issuer_did"],
                holder_did=data["holder_did"],
                issued_at=from_timestamp(data["issued_at"]),
                expires_at=from_timestamp(data["expires_at"]),
                schema=data["schema"],
            )
        except KeyError as exc:
            raise InvalidInput(f"credential metadata missing field {exc}") from exc


@dataclass(frozen=True)
class VerifiableCredential:
    """Issuer-signed metadata plus the structured commitment map."""

    metadata: CredentialMetadata
    h_claims: dict[str, bytes]
    proof: bytes

    def signing_bytes(self) -> bytes:
        return credential_signing_bytes(self.metadata, self.h_claims)

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata.to_dict(),
            "h_claims": {name: hexencode(d) for name, d in self.h_claims.items()},
            "proof": b64encode(self.proof),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VerifiableCredential":
        try:
            return cls(
                metadata=CredentialMetadata.from_dict(data["metadata"]),
                h_claims={
                    name: hexdecode(digest, what=f"h_claims[{name}]")
                    for name, digest in data["h_claims"].items()
                },
                proof=b64decode(data["proof"], what="proof"),
            )
        except KeyError as exc:
            raise InvalidInput(f"credential missing field {exc}") from exc


def credential_signing_bytes(metadata: CredentialMetadata, h_claims: dict[str, bytes]) -> bytes:
    hex_claims = {name: hexencode(digest) for name, digest in h_claims.items()}
    return canonical_json(metadata.to_dict()) + canonical_json(hex_claims)


def build_hclaims(claims: Iterable[AttributeClaim]) -> tuple[dict[str, bytes], dict[str, bytes]]:
    """Commit each claim under a fresh salt.

    Returns (hashed claims, salt map); the maps share exactly the same keys.
    """
    h_claims: dict[str, bytes] = {}
    salts: dict[str, bytes] = {}
    for claim in claims:
        if claim.name in h_claims:
            raise InvalidInput(f"duplicate attribute name: {claim.name!r}")
        salt = crypto.generate_salt()
        h_claims[claim.name] = crypto.commit_attribute(claim.name, claim.value, salt)
        salts[claim.name] = salt
    return h_claims, salts


def issue_credential(
    metadata: CredentialMetadata,
    h_claims: dict[str, bytes],
    issuer_private_key: bytes,
) -> VerifiableCredential:
    """Sign metadata plus hashed claims into a credential."""
    for field_name in ("credential_id", "schema"):
        if not getattr(metadata, field_name):
            raise InvalidInput(f"metadata.{field_name} must be nonempty")
    parse_did(metadata.issuer_did)
    parse_did(metadata.holder_did)
    if metadata.expires_at <= metadata.issued_at:
        raise InvalidInput("expires_at must be after issued_at")
    proof = crypto.sign(credential_signing_bytes(metadata, h_claims), issuer_private_key)
    return VerifiableCredential(metadata=metadata, h_claims=dict(h_claims), proof=proof)


def verify_credential(
    vc: VerifiableCredential,
    registry: VdrClient,
    clock: Callable[[], datetime] = utcnow,
) -> bool:
    """True iff the issuer resolves, the proof verifies, and it is unexpired.

    Registry transport failures propagate; an unknown or malformed issuer
    DID is a false verdict, not an error.
    """
    try:
        document = registry.resolve(vc.metadata.issuer_did)
    except (NotFound, InvalidDid):
        return False
    try:
        if not crypto.verify(vc.signing_bytes(), vc.proof, document.public_key):
            return False
    except InvalidInput:
        return False
    return clock() < vc.metadata.expires_at


class Issuer:
    """Issuer role: pends challenges, verifies possession, signs credentials."""

    def __init__(
        self,
        did: str,
        keypair: crypto.KeyPair,
        registry: VdrClient,
        clock: Callable[[], datetime] = utcnow,
        challenge_ttl: float = CHALLENGE_TTL_SECONDS,
    ):
        self.did = did
        self.keypair = keypair
        self.registry = registry
        self._clock = clock
        self._challenge_ttl = challenge_ttl
        self._lock = threading.Lock()
        self._pending: dict[str, Challenge] = {}

    def create_challenge(self, holder_did: str) -> Challenge:
        parse_did(holder_did)
        challenge = Challenge(
            nonce=crypto.generate_salt(),
            issued_at=self._clock(),
            holder_did=holder_did,
            ttl=self._challenge_ttl,
        )
        with self._lock:
            self._sweep_locked()
            self._pending[hexencode(challenge.nonce)] = challenge
        return challenge

    def pending_count(self) -> int:
        with self._lock:
            return len(self._pending)

    def _sweep_locked(self) -> None:
        now = self._clock()
        stale = [k for k, c in self._pending.items() if c.expired(now)]
        for key in stale:
            del self._pending[key]

    def verify_challenge_response(self, response: ChallengeResponse) -> bool:
        """True iff the nonce is pending and the signature verifies.

        Consumes the nonce on success only; replays and expired challenges
        are false verdicts.  Registry transport failures propagate.
        """
        key = hexencode(response.challenge.nonce)
        with self._lock:
            pending = self._pending.get(key)
            if pending is None or pending.expired(self._clock()):
                self._pending.pop(key, None)
                return False
        if response.challenge.to_dict() != pending.to_dict():
            return False
        try:
            document = self.registry.resolve(pending.holder_did)
        except (NotFound, InvalidDid):
            return False
        try:
            ok = crypto.verify(pending.signing_bytes(), response.signature,
                               document.public_key)
        except InvalidInput:
            return False
        if not ok:
            return False
        with self._lock:
            # A concurrent verification of the same response may have won.
            return self._pending.pop(key, None) is not None

    def issue(
        self,
        response: ChallengeResponse,
        claims: Iterable[AttributeClaim],
        schema: str = "generic",
        validity: timedelta = timedelta(days=365),
    ) -> tuple[VerifiableCredential, dict[str, bytes]]:
        """Full issuance step: possession check, commitments, signature.

        Returns the credential together with the salt map the holder needs
        to open its commitments later.  The issuer keeps no copy of the
        salts.
        """
        if not self.verify_challenge_response(response):
            raise InvalidInput("challenge-response verification failed")
        h_claims, salts = build_hclaims(claims)
        now = self._clock()
        metadata = CredentialMetadata(
            credential_id=str(uuid.uuid4()),
            issuer_did=self.did,
            holder_did=response.challenge.holder_did,
            issued_at=now,
            expires_at=now + validity,
            schema=schema,
        )
        vc = issue_credential(metadata, h_claims, self.keypair.private_key)
        return vc, salts


@dataclass
class StoredCredential:
    credential: VerifiableCredential
    salts: dict[str, bytes] = field(default_factory=dict)
    values: dict[str, str] = field(default_factory=dict)


class Wallet:
    """Holder-side credential store: credentials, salts, and plaintext values.

    When a directory is given, each credential persists under
    ``<dir>/<credential_id>/`` as ``credential.json``, ``salts.json``
    (name -> hex salt) and ``claims.json`` (name -> plaintext value).
    """

    def __init__(self, directory: Optional[Path] = None):
        self._directory = Path(directory) if directory else None
        self._credentials: dict[str, StoredCredential] = {}
        if self._directory is not None:
            self._directory.mkdir(parents=True, exist_ok=True)
            self._load()

    def _load(self) -> None:
        for entry in sorted(self._directory.iterdir()):
            cred_file = entry / "credential.json"
            salt_file = entry / "salts.json"
            claims_file = entry / "claims.json"
            if not (entry.is_dir() and cred_file.exists() and salt_file.exists()):
                continue
            vc = VerifiableCredential.from_dict(json.loads(cred_file.read_text()))
            salts = {
                name: hexdecode(value, what=f"salt[{name}]")
                for name, value in json.loads(salt_file.read_text()).items()
            }
            values = json.loads(claims_file.read_text()) if claims_file.exists() else {}
            self._credentials[vc.metadata.credential_id] = StoredCredential(
                vc, salts, values
            )

    def add(
        self,
        credential: VerifiableCredential,
        salts: dict[str, bytes],
        values: dict[str, str],
    ) -> None:
        if set(salts) != set(credential.h_claims):
            raise InvalidInput("salt map keys do not match the hashed claims")
        if set(values) != set(credential.h_claims):
            raise InvalidInput("claim values do not match the hashed claims")
        record = StoredCredential(credential, dict(salts), dict(values))
        self._credentials[credential.metadata.credential_id] = record
        if self._directory is not None:
            target = self._directory / credential.metadata.credential_id
            target.mkdir(parents=True, exist_ok=True)
            (target / "credential.json").write_bytes(canonical_json(credential.to_dict()))
            (target / "salts.json").write_bytes(
                canonical_json({n: hexencode(s) for n, s in salts.items()})
            )
            (target / "claims.json").write_bytes(canonical_json(values))

    def get(self, credential_id: str) -> StoredCredential:
        try:
            return self._credentials[credential_id]
        except KeyError as exc:
            raise NotFound(f"wallet holds no credential {credential_id}") from exc

    def credential_ids(self) -> list[str]:
        return sorted(self._credentials)

    def __len__(self) -> int:
        return len(self._credentials)
