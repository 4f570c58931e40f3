"""Verifiable Data Registry: DID minting, storage, and resolution.

The registry is a plain service object with a pluggable store; the wire
layer lives in ``polaris.service.vdr_app``.  Two stores ship: an in-memory
map (default; tests and benchmarks) and an append-only file journal for
persistence.  Both guarantee atomic insert and stable reads per DID.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Optional, Protocol

import httpx

from . import crypto
from .encoding import (
    b64decode,
    b64encode,
    canonical_json,
    from_timestamp,
    to_timestamp,
    utcnow,
)
from .errors import InvalidDid, InvalidInput, NotFound, TransportError

DID_METHOD = "polaris"
DID_PREFIX = f"did:{DID_METHOD}:"


def mint_did() -> str:
    return DID_PREFIX + str(uuid.uuid4())


def parse_did(did: str) -> str:
    """Validate a DID string, returning it unchanged.

    Raises InvalidDid for anything that is not did:polaris:<uuid>.
    """
    if not isinstance(did, str) or not did.startswith(DID_PREFIX):
        raise InvalidDid(f"unsupported DID: {did!r}")
    identifier = did[len(DID_PREFIX):]
    try:
        uuid.UUID(identifier)
    except (ValueError, AttributeError) as exc:
        raise InvalidDid(f"DID identifier is not a UUID: {did!r}") from exc
    return did


@dataclass(frozen=True)
class DidDocument:
    """Registry record binding a DID to its public key."""

    did: str
    public_key: bytes
    algorithm: str
    created_at: datetime
    uuid: str

    def to_dict(self) -> dict:
        return {
            "did": self.did,
            "public_key": b64encode(self.public_key),
            "algorithm": self.algorithm,
            "created_at": to_timestamp(self.created_at),
            "uuid": self.uuid,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DidDocument":
        try:
            return cls(
                did=data["did"],
                public_key=b64decode(data["public_key"], what="public_key"),
                algorithm=data["algorithm"],
                created_at=from_timestamp(data["created_at"]),
                uuid=data["uuid"],
            )
        except KeyError as exc:
            raise InvalidInput(f"DID document missing field {exc}") from exc


class DidStore(Protocol):
    def put(self, did: str, document: DidDocument) -> None: ...

    def get(self, did: str) -> Optional[DidDocument]: ...


class InMemoryDidStore:
    """Dict-backed store; atomic insert under a lock."""

    def __init__(self):
        self._lock = threading.Lock()
        self._docs: dict[str, DidDocument] = {}

    def put(self, did: str, document: DidDocument) -> None:
        with self._lock:
            self._docs[did] = document

    def get(self, did: str) -> Optional[DidDocument]:
        with self._lock:
            return self._docs.get(did)

    def __len__(self) -> int:
        with self._lock:
            return len(self._docs)


class FileJournalDidStore:
    """Append-only journal: one canonical-JSON document per line.

    The full journal is replayed into an in-memory index on open, so reads
    never touch the disk.
    """

    def __init__(self, path):
        self._lock = threading.Lock()
        self._path = path
        self._docs: dict[str, DidDocument] = {}
        self._handle = open(path, "a+", encoding="utf-8")
        self._handle.seek(0)
        for line in self._handle:
            line = line.strip()
            if line:
                doc = DidDocument.from_dict(json.loads(line))
                self._docs[doc.did] = doc
        self._handle.seek(0, 2)

    def put(self, did: str, document: DidDocument) -> None:
        with self._lock:
            self._handle.write(canonical_json(document.to_dict()).decode("utf-8") + "\n")
            self._handle.flush()
            self._docs[did] = document

    def get(self, did: str) -> Optional[DidDocument]:
        with self._lock:
            return self._docs.get(did)

    def close(self) -> None:
        with self._lock:
            self._handle.close()


class DidRegistry:
    """Mints DIDs, stores their documents, and serves resolution."""

    def __init__(self, store: Optional[DidStore] = None,
                 clock: Callable[[], datetime] = utcnow):
        self.store = store if store is not None else InMemoryDidStore()
        self._clock = clock

    def register(self, public_key: bytes, algorithm: str, uuid_hint: str) -> str:
        """Mint a fresh DID for the submitted key and store its document.

        The same public key may be registered any number of times; minting
        is per request.
        """
        if not public_key:
            raise InvalidInput("public key must be nonempty")
        if not uuid_hint:
            raise InvalidInput("uuid must be nonempty")
        if algorithm != crypto.ALGORITHM:
            raise InvalidInput(f"unsupported key algorithm: {algorithm!r}")
        crypto.validate_public_key(public_key)
        did = mint_did()
        document = DidDocument(
            did=did,
            public_key=bytes(public_key),
            algorithm=algorithm,
            created_at=self._clock(),
            uuid=uuid_hint,
        )
        self.store.put(did, document)
        return did

    def resolve(self, did: str) -> DidDocument:
        """Return the stored document for a DID; raises NotFound if absent."""
        parse_did(did)
        document = self.store.get(did)
        if document is None:
            raise NotFound(f"no document registered for {did}")
        return document


class VdrClient(Protocol):
    """The resolution/registration surface every other module consumes."""

    def register(self, public_key: bytes, algorithm: str, uuid_hint: str) -> str: ...

    def resolve(self, did: str) -> DidDocument: ...


class LocalVdrClient:
    """In-process client wrapping a DidRegistry directly."""

    def __init__(self, registry: DidRegistry):
        self._registry = registry

    def register(self, public_key: bytes, algorithm: str, uuid_hint: str) -> str:
        return self._registry.register(public_key, algorithm, uuid_hint)

    def resolve(self, did: str) -> DidDocument:
        return self._registry.resolve(did)


class HttpVdrClient:
    """Client for a remote registry service speaking the JSON wire API."""

    def __init__(self, base_url: str, client: Optional[httpx.Client] = None,
                 timeout: float = 10.0):
        self._client = client or httpx.Client(base_url=base_url, timeout=timeout)

    def register(self, public_key: bytes, algorithm: str, uuid_hint: str) -> str:
        body = {
            "public_key": b64encode(public_key),
            "algorithm": algorithm,
            "uuid": uuid_hint,
        }
        try:
            response = self._client.post("/did/register", json=body)
        except httpx.HTTPError as exc:
            raise TransportError(f"registry unreachable: {exc}") from exc
        if response.status_code == 400:
            raise InvalidInput(response.json().get("detail", "rejected"))
        if response.status_code != 200:
            raise TransportError(f"registry returned {response.status_code}")
        return response.json()["did"]

    def resolve(self, did: str) -> DidDocument:
        try:
            response = self._client.get(f"/did/resolve/{did}")
        except httpx.HTTPError as exc:
            raise TransportError(f"registry unreachable: {exc}") from exc
        if response.status_code == 404:
            raise NotFound(f"no document registered for {did}")
        if response.status_code == 400:
            raise InvalidDid(response.json().get("detail", did))
        if response.status_code != 200:
            raise TransportError(f"registry returned {response.status_code}")
        return DidDocument.from_dict(response.json())

    def close(self) -> None:
        self._client.close()
