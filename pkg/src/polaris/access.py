"""Resource server, authorization server, and owner verifier, orchestrated
into the four-phase access flow: upload, authenticate, authorize, access.

The resource server keeps the directory (resource records), the policy
store (canonical policy bytes keyed by resource id), grants, and the
consumed-presentation set.  The authorization server's decision point
checks policy integrity and evaluates the policy over verified attributes;
its enforcement side simply hands the decision back to the owner, who
applies the (configurable, fail-closed) grant mapping.

Plaintext claims never reach policy evaluation without first passing the
commitment check: request_access runs presentation verification before the
decision point is ever consulted.
"""

from __future__ import annotations

import secrets
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Optional, Protocol, Union

import httpx

from .encoding import from_timestamp, hexencode, to_timestamp, utcnow
from .errors import (
    AuthenticationFailure,
    GrantInvalid,
    InvalidInput,
    NotFound,
    PolicyIntegrityError,
    PresentationError,
    ReplayedPresentation,
    TransportError,
)
from .presentation import SignedPresentation, VerifiedAttributes, verify_presentation
from .vdr import VdrClient
from .vppl import (
    Decision,
    INVALID,
    Policy,
    VALID,
    evaluate_policy,
    parse_policy,
    serialize_policy,
    verify_policy_signature,
)

DEFAULT_GRANT_TTL = 300.0
GRANT_TOKEN_LENGTH = 32
CONSUMED_NONCE_RETENTION = 3600.0


@dataclass(frozen=True)
class ResourceRecord:
    resource_id: str
    owner_did: str
    address: str
    description: str
    created_at: datetime

    def to_dict(self) -> dict:
        return {
            "resource_id": self.resource_id,
            "owner_did": self.owner_did,
            "address": self.address,
            "description": self.description,
            "created_at": to_timestamp(self.created_at),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ResourceRecord":
        return cls(
            resource_id=data["resource_id"],
            owner_did=data["owner_did"],
            address=data["address"],
            description=data["description"],
            created_at=from_timestamp(data["created_at"]),
        )


@dataclass(frozen=True)
class AccessGrant:
    """Bearer grant minted on a Permit decision; single resource, short TTL."""

    grant_id: str
    resource_id: str
    requester_did: str
    decision: Decision
    expires_at: datetime
    token: bytes

    def to_dict(self) -> dict:
        return {
            "grant_id": self.grant_id,
            "resource_id": self.resource_id,
            "requester_did": self.requester_did,
            "decision": self.decision.to_dict(),
            "expires_at": to_timestamp(self.expires_at),
            "token": hexencode(self.token),
        }


@dataclass(frozen=True)
class AccessDenial:
    """Clean deny: the pipeline completed and the decision was not Permit."""

    resource_id: str
    requester_did: str
    decision: Decision

    def to_dict(self) -> dict:
        return {
            "resource_id": self.resource_id,
            "requester_did": self.requester_did,
            "decision": self.decision.to_dict(),
        }


class ContentStore(Protocol):
    def put(self, resource_id: str, content: bytes) -> str: ...

    def get(self, resource_id: str) -> bytes: ...


class MemoryContentStore:
    def __init__(self):
        self._lock = threading.Lock()
        self._blobs: dict[str, bytes] = {}

    def put(self, resource_id: str, content: bytes) -> str:
        with self._lock:
            self._blobs[resource_id] = bytes(content)
        return f"mem://{resource_id}"

    def get(self, resource_id: str) -> bytes:
        with self._lock:
            try:
                return self._blobs[resource_id]
            except KeyError as exc:
                raise NotFound(f"no content stored for {resource_id}") from exc


class FileContentStore:
    """Local file backend behind the directory locator."""

    def __init__(self, directory: Union[str, Path]):
        self._directory = Path(directory)
        self._directory.mkdir(parents=True, exist_ok=True)

    def put(self, resource_id: str, content: bytes) -> str:
        path = self._directory / resource_id
        path.write_bytes(content)
        return f"file://{path}"

    def get(self, resource_id: str) -> bytes:
        path = self._directory / resource_id
        if not path.exists():
            raise NotFound(f"no content stored for {resource_id}")
        return path.read_bytes()


class AuthorizationService:
    """Decision point plus enforcement wrapper.

    ``evaluate`` checks the policy signature when one is present (an
    invalid or unverifiable signature is a policy-integrity failure, never
    a Deny) and then evaluates the policy over the verified attributes.
    """

    def __init__(self, registry: VdrClient, clock: Callable[[], datetime] = utcnow):
        self.registry = registry
        self._clock = clock
        self._lock = threading.Lock()
        self.evaluations = 0

    def evaluate(self, policy: Policy, attrs: VerifiedAttributes) -> tuple[Decision, str]:
        try:
            signature_status = verify_policy_signature(policy, self.registry)
        except (NotFound, InvalidInput) as exc:
            raise PolicyIntegrityError(f"policy signer cannot be resolved: {exc}") from exc
        if signature_status == INVALID:
            raise PolicyIntegrityError("policy signature does not verify")
        with self._lock:
            self.evaluations += 1
        return evaluate_policy(policy, attrs), signature_status


class AuthzClient(Protocol):
    def evaluate(self, policy: Policy, attrs: VerifiedAttributes) -> tuple[Decision, str]: ...


class LocalAuthzClient:
    def __init__(self, service: AuthorizationService):
        self._service = service

    def evaluate(self, policy: Policy, attrs: VerifiedAttributes) -> tuple[Decision, str]:
        return self._service.evaluate(policy, attrs)


class HttpAuthzClient:
    """Plain-JSON client for a remote authorization service."""

    def __init__(self, base_url: str, client: Optional[httpx.Client] = None,
                 timeout: float = 10.0):
        self._client = client or httpx.Client(base_url=base_url, timeout=timeout)

    def evaluate(self, policy: Policy, attrs: VerifiedAttributes) -> tuple[Decision, str]:
        body = {
            "policy": policy.to_dict(),
            "attributes": attrs.as_dicts(),
        }
        try:
            response = self._client.post("/evaluate", json=body)
        except httpx.HTTPError as exc:
            raise TransportError(f"authorization server unreachable: {exc}") from exc
        if response.status_code == 422:
            raise PolicyIntegrityError(response.json().get("detail", "policy integrity"))
        if response.status_code != 200:
            raise TransportError(f"authorization server returned {response.status_code}")
        data = response.json()
        return Decision.from_dict(data["decision"]), data["signature_status"]

    def close(self) -> None:
        self._client.close()


def fail_closed(decision: Decision) -> bool:
    """Default owner mapping: only an explicit Permit grants access."""
    return decision.outcome == "Permit"


class ResourceService:
    """Directory, policy store, grants, and the owner-side access pipeline."""

    def __init__(
        self,
        registry: VdrClient,
        authz: AuthzClient,
        content_store: Optional[ContentStore] = None,
        require_signed_policies: bool = False,
        grant_ttl: float = DEFAULT_GRANT_TTL,
        final_decision_hook: Callable[[Decision], bool] = fail_closed,
        clock: Callable[[], datetime] = utcnow,
    ):
        self.registry = registry
        self.authz = authz
        self.content_store = content_store if content_store is not None else MemoryContentStore()
        self.require_signed_policies = require_signed_policies
        self.grant_ttl = grant_ttl
        self.final_decision_hook = final_decision_hook
        self._clock = clock
        self._lock = threading.Lock()
        self._records: dict[str, ResourceRecord] = {}
        self._policies: dict[str, bytes] = {}
        self._grants: dict[str, AccessGrant] = {}
        self._consumed_nonces: dict[str, datetime] = {}

    # -- upload ---------------------------------------------------------

    def upload_resource(
        self,
        owner_did: str,
        content: bytes,
        description: str,
        policy: Union[Policy, bytes, str],
    ) -> ResourceRecord:
        """Validate the policy, store the content, record the metadata."""
        if isinstance(policy, (bytes, str)):
            policy = parse_policy(policy)
        self.registry.resolve(owner_did)  # owner must be registered
        if policy.signature is not None:
            if policy.signature.signer_did != owner_did:
                raise InvalidInput("policy signer is not the resource owner")
            status = verify_policy_signature(policy, self.registry)
            if status != VALID:
                raise InvalidInput("policy signature does not verify")
        elif self.require_signed_policies:
            raise InvalidInput("unsigned policy rejected: signing is required")
        resource_id = str(uuid.uuid4())
        address = self.content_store.put(resource_id, content)
        record = ResourceRecord(
            resource_id=resource_id,
            owner_did=owner_did,
            address=address,
            description=description,
            created_at=self._clock(),
        )
        with self._lock:
            self._records[resource_id] = record
            self._policies[resource_id] = serialize_policy(policy)
        return record

    # -- directory / policy lookups -------------------------------------

    def get_record(self, resource_id: str) -> ResourceRecord:
        with self._lock:
            record = self._records.get(resource_id)
        if record is None:
            raise NotFound(f"unknown resource {resource_id}")
        return record

    def get_policy_bytes(self, resource_id: str) -> bytes:
        """The exact canonical policy bytes stored at upload time."""
        with self._lock:
            blob = self._policies.get(resource_id)
        if blob is None:
            raise NotFound(f"unknown resource {resource_id}")
        return blob

    def get_policy(self, resource_id: str) -> Policy:
        return parse_policy(self.get_policy_bytes(resource_id))

    # -- access pipeline -------------------------------------------------

    def request_access(
        self, message: SignedPresentation, resource_id: str
    ) -> Union[AccessGrant, AccessDenial]:
        """Authenticate, then authorize, then decide.

        Order is load-bearing: the presentation is cryptographically
        verified (and its nonce consumed) before the policy engine ever
        sees a claim.  Authentication failures, replays, and
        policy-integrity failures raise; a completed evaluation that does
        not permit returns an AccessDenial carrying the trace.
        """
        record = self.get_record(resource_id)
        nonce_key = hexencode(message.vp.nonce)
        now = self._clock()
        with self._lock:
            self._sweep_nonces_locked(now)
            if nonce_key in self._consumed_nonces:
                raise ReplayedPresentation("presentation nonce already consumed")
        try:
            attrs = verify_presentation(message, self.registry, strict=True,
                                        clock=self._clock)
        except PresentationError as exc:
            raise AuthenticationFailure(str(exc)) from exc
        if message.vp.audience != record.owner_did:
            raise AuthenticationFailure(
                "presentation audience is not the resource owner"
            )
        with self._lock:
            if nonce_key in self._consumed_nonces:
                raise ReplayedPresentation("presentation nonce already consumed")
            self._consumed_nonces[nonce_key] = now

        policy = self.get_policy(resource_id)
        decision, _signature_status = self.authz.evaluate(policy, attrs)

        if not self.final_decision_hook(decision):
            return AccessDenial(
                resource_id=resource_id,
                requester_did=message.vp.holder_did,
                decision=decision,
            )
        grant = AccessGrant(
            grant_id=str(uuid.uuid4()),
            resource_id=resource_id,
            requester_did=message.vp.holder_did,
            decision=decision,
            expires_at=now + timedelta(seconds=self.grant_ttl),
            token=secrets.token_bytes(GRANT_TOKEN_LENGTH),
        )
        with self._lock:
            self._grants[hexencode(grant.token)] = grant
        return grant

    def fetch_resource(self, token: Union[str, bytes], resource_id: str) -> bytes:
        """Exchange a live grant token for the resource bytes."""
        token_key = token if isinstance(token, str) else hexencode(token)
        now = self._clock()
        with self._lock:
            grant = self._grants.get(token_key)
            if grant is not None and now >= grant.expires_at:
                del self._grants[token_key]
                grant = None
        if grant is None:
            raise GrantInvalid("unknown or expired grant token")
        if grant.resource_id != resource_id:
            raise GrantInvalid("grant does not cover this resource")
        return self.content_store.get(resource_id)

    def _sweep_nonces_locked(self, now: datetime) -> None:
        cutoff = now - timedelta(seconds=CONSUMED_NONCE_RETENTION)
        stale = [k for k, seen in self._consumed_nonces.items() if seen < cutoff]
        for key in stale:
            del self._consumed_nonces[key]
