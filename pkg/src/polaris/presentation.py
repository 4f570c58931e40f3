"""Verifiable presentations: selective disclosure across credentials.

The holder aggregates any number of credentials, discloses a chosen subset
of attributes (values plus their salts) per credential, and signs the whole
structure once.  Verification is three steps: holder signature, embedded
credential proofs, and per-attribute commitment recomputation.  Each
disclosed attribute costs a single map lookup in the credential's
commitment map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Sequence

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
from .errors import (
    CommitmentMismatch,
    CredentialInvalid,
    DisclosureInvalid,
    HolderSignatureInvalid,
    InvalidDid,
    InvalidInput,
    NotFound,
)
from .issuance import AttributeClaim, VerifiableCredential, Wallet, verify_credential
from .vdr import VdrClient, parse_did

PRESENTATION_NONCE_LENGTH = 16


@dataclass(frozen=True)
class DisclosureSelection:
    """Which attributes of one wallet credential to reveal."""

    credential_id: str
    attribute_names: tuple[str, ...]

    @classmethod
    def of(cls, credential_id: str, *names: str) -> "DisclosureSelection":
        return cls(credential_id=credential_id, attribute_names=tuple(names))


@dataclass(frozen=True)
class PresentationEntry:
    vc: VerifiableCredential
    disclosed: tuple[AttributeClaim, ...]
    salts: dict[str, bytes]

    def to_dict(self) -> dict:
        return {
            "vc": self.vc.to_dict(),
            "disclosed": [{"name": c.name, "value": c.value} for c in self.disclosed],
            "salts": {name: hexencode(salt) for name, salt in self.salts.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PresentationEntry":
        return cls(
            vc=VerifiableCredential.from_dict(data["vc"]),
            disclosed=tuple(
                AttributeClaim(name=item["name"], value=item["value"])
                for item in data["disclosed"]
            ),
            salts={
                name: hexdecode(salt, what=f"salts[{name}]")
                for name, salt in data["salts"].items()
            },
        )


@dataclass(frozen=True)
class VerifiablePresentation:
    entries: tuple[PresentationEntry, ...]
    holder_did: str
    audience: str
    nonce: bytes
    created_at: datetime

    def to_dict(self) -> dict:
        return {
            "entries": [entry.to_dict() for entry in self.entries],
            "holder_did": self.holder_did,
            "audience": self.audience,
            "nonce": hexencode(self.nonce),
            "created_at": to_timestamp(self.created_at),
        }

    def signing_bytes(self) -> bytes:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "VerifiablePresentation":
        try:
            return cls(
                entries=tuple(PresentationEntry.from_dict(e) for e in data["entries"]),
                holder_did=data["holder_did"],
                audience=data["audience"],
                nonce=hexdecode(data["nonce"], what="nonce"),
                created_at=from_timestamp(data["created_at"]),
            )
        except KeyError as exc:
            raise InvalidInput(f"presentation missing field {exc}") from exc


@dataclass(frozen=True)
class SignedPresentation:
    vp: VerifiablePresentation
    holder_signature: bytes

    def to_dict(self) -> dict:
        data = self.vp.to_dict()
        data["holder_signature"] = b64encode(self.holder_signature)
        return data

    def to_json(self) -> bytes:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "SignedPresentation":
        try:
            signature = b64decode(data["holder_signature"], what="holder_signature")
        except KeyError as exc:
            raise InvalidInput("presentation missing holder_signature") from exc
        body = {k: v for k, v in data.items() if k != "holder_signature"}
        return cls(vp=VerifiablePresentation.from_dict(body), holder_signature=signature)


@dataclass(frozen=True)
class VerifiedTriple:
    issuer_did: str
    name: str
    value: str


@dataclass
class VerifiedAttributes:
    """Attributes that survived all three verification steps.

    ``failures`` is populated only in permissive mode; strict mode raises
    instead.
    """

    triples: list[VerifiedTriple] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def as_dicts(self) -> list[dict]:
        return [
            {"issuer_did": t.issuer_did, "name": t.name, "value": t.value}
            for t in self.triples
        ]


def build_presentation(
    wallet: Wallet,
    selections: Sequence[DisclosureSelection],
    audience: str,
    holder_did: str,
    holder_private_key: bytes,
    clock: Callable[[], datetime] = utcnow,
) -> SignedPresentation:
    """Assemble and sign a presentation disclosing exactly the selections.

    Undisclosed values and salts never enter the output; the credentials
    themselves appear in full (commitments only).
    """
    parse_did(audience)
    parse_did(holder_did)
    entries = []
    for selection in selections:
        stored = wallet.get(selection.credential_id)
        disclosed = []
        salts = {}
        for name in selection.attribute_names:
            if name not in stored.credential.h_claims:
                raise InvalidInput(
                    f"attribute {name!r} is not committed in credential "
                    f"{selection.credential_id}"
                )
            if name not in stored.salts or name not in stored.values:
                raise InvalidInput(f"wallet holds no opening for attribute {name!r}")
            disclosed.append(AttributeClaim(name=name, value=stored.values[name]))
            salts[name] = stored.salts[name]
        entries.append(
            PresentationEntry(
                vc=stored.credential, disclosed=tuple(disclosed), salts=salts
            )
        )
    vp = VerifiablePresentation(
        entries=tuple(entries),
        holder_did=holder_did,
        audience=audience,
        nonce=crypto.generate_salt(),
        created_at=clock(),
    )
    signature = crypto.sign(vp.signing_bytes(), holder_private_key)
    return SignedPresentation(vp=vp, holder_signature=signature)


def verify_presentation(
    message: SignedPresentation,
    registry: VdrClient,
    strict: bool = True,
    clock: Callable[[], datetime] = utcnow,
) -> VerifiedAttributes:
    """Run the three-step verification and return the trusted triples.

    Step 1 (holder signature) failure always raises.  In strict mode any
    step-2 (credential) or step-3 (commitment) failure raises the matching
    typed error; in permissive mode failing entries/attributes are dropped
    and recorded in ``failures``.
    """
    vp = message.vp
    try:
        holder_doc = registry.resolve(vp.holder_did)
    except (NotFound, InvalidDid) as exc:
        raise HolderSignatureInvalid(f"holder DID does not resolve: {exc}") from exc
    try:
        signature_ok = crypto.verify(
            vp.signing_bytes(), message.holder_signature, holder_doc.public_key
        )
    except InvalidInput as exc:
        raise HolderSignatureInvalid(str(exc)) from exc
    if not signature_ok:
        raise HolderSignatureInvalid("holder signature does not verify")

    result = VerifiedAttributes()
    for index, entry in enumerate(vp.entries):
        if set(entry.salts) != {claim.name for claim in entry.disclosed}:
            failure = DisclosureInvalid(
                f"entry {index}: disclosed names and salt keys differ"
            )
            if strict:
                raise failure
            result.failures.append({"entry": index, "kind": "disclosure", "detail": str(failure)})
            continue
        if not verify_credential(entry.vc, registry, clock=clock):
            failure = CredentialInvalid(
                f"entry {index}: credential "
                f"{entry.vc.metadata.credential_id} failed verification"
            )
            if strict:
                raise failure
            result.failures.append({"entry": index, "kind": "credential", "detail": str(failure)})
            continue
        issuer = entry.vc.metadata.issuer_did
        entry_triples = []
        entry_ok = True
        for claim in entry.disclosed:
            committed = entry.vc.h_claims.get(claim.name)
            if committed is None:
                failure = CommitmentMismatch(
                    f"entry {index}: attribute {claim.name!r} has no commitment"
                )
            elif crypto.commit_attribute(claim.name, claim.value, entry.salts[claim.name]) != committed:
                failure = CommitmentMismatch(
                    f"entry {index}: attribute {claim.name!r} does not match its commitment"
                )
            else:
                entry_triples.append(
                    VerifiedTriple(issuer_did=issuer, name=claim.name, value=claim.value)
                )
                continue
            if strict:
                raise failure
            entry_ok = False
            result.failures.append(
                {"entry": index, "kind": "commitment", "attribute": claim.name,
                 "detail": str(failure)}
            )
        if entry_ok or not strict:
            result.triples.extend(entry_triples)
    return result
