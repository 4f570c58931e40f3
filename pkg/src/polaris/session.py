"""Session-level security: derived keys, sealed envelopes, replay defense.

A session key is derived once by the initiator from the concatenated DID
pair plus a random salt, then transported to the peer inside the first
envelope under the peer's public key.  Every subsequent message is
symmetric-only, so the expensive asymmetric operations happen exactly once
per session no matter how many messages flow.

The DID-pair password is public by construction; confidentiality rests
entirely on the asymmetric transport of the (key, salt) bundle, with the
random salt guaranteeing distinct keys per session.  Replay is defeated by
per-sender strictly increasing counters bound into the AEAD associated
data, and every context expires after its TTL.
"""

from __future__ import annotations

import json
import struct
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Callable, Optional

from . import crypto
from .encoding import b64decode, b64encode, canonical_json, utcnow
from .errors import (
    DecryptionError,
    InvalidInput,
    ReplayedCounter,
    SessionExpired,
    UnknownSession,
)
from .vdr import VdrClient

DEFAULT_SESSION_TTL = 600.0

_TRANSPORT_MAGIC = b"PSK1"


@dataclass
class SessionContext:
    """One side's view of a live session."""

    session_id: str
    self_did: str
    peer_did: str
    key: crypto.SymmetricKey
    kdf_salt: bytes
    created_at: datetime
    ttl: float = DEFAULT_SESSION_TTL
    send_counter: int = 0
    recv_counter: int = -1
    is_initiator: bool = False
    peer_public_key: Optional[bytes] = field(default=None, repr=False)
    self_private_key: Optional[bytes] = field(default=None, repr=False)
    clock: Callable[[], datetime] = field(default=utcnow, repr=False)

    def expired(self, now: Optional[datetime] = None) -> bool:
        now = now if now is not None else self.clock()
        return now >= self.created_at + timedelta(seconds=self.ttl)


@dataclass(frozen=True)
class SecureEnvelope:
    """Wire unit: AEAD body plus, on the first message only, the sealed key."""

    session_id: str
    sender_did: str
    counter: int
    body: bytes
    key_transport: Optional[bytes] = None

    def header_bytes(self) -> bytes:
        return canonical_json(
            {
                "counter": self.counter,
                "sender_did": self.sender_did,
                "session_id": self.session_id,
            }
        )

    def to_dict(self) -> dict:
        data = {
            "session_id": self.session_id,
            "sender_did": self.sender_did,
            "counter": self.counter,
            "body": b64encode(self.body),
        }
        if self.key_transport is not None:
            data["key_transport"] = b64encode(self.key_transport)
        return data

    def to_json(self) -> bytes:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "SecureEnvelope":
        try:
            transport = data.get("key_transport")
            return cls(
                session_id=data["session_id"],
                sender_did=data["sender_did"],
                counter=int(data["counter"]),
                body=b64decode(data["body"], what="body"),
                key_transport=(
                    b64decode(transport, what="key_transport")
                    if transport is not None
                    else None
                ),
            )
        except KeyError as exc:
            raise InvalidInput(f"envelope missing field {exc}") from exc

    @classmethod
    def from_json(cls, raw: bytes) -> "SecureEnvelope":
        try:
            data = json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise InvalidInput(f"envelope is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidInput("envelope must be a JSON object")
        return cls.from_dict(data)


def _transport_signing_bytes(key: bytes, kdf_salt: bytes, session_id: str,
                             ttl: float, sender_did: str, peer_did: str) -> bytes:
    return b"|".join(
        [
            _TRANSPORT_MAGIC,
            key,
            kdf_salt,
            session_id.encode("utf-8"),
            struct.pack(">I", int(ttl)),
            sender_did.encode("utf-8"),
            peer_did.encode("utf-8"),
        ]
    )


def _build_transport_blob(ctx: SessionContext) -> bytes:
    """Pack {key, salt, session id, ttl} plus an origin signature."""
    session_uuid = uuid.UUID(ctx.session_id).bytes
    signature = crypto.sign(
        _transport_signing_bytes(
            ctx.key.material, ctx.kdf_salt, ctx.session_id, ctx.ttl,
            ctx.self_did, ctx.peer_did,
        ),
        ctx.self_private_key,
    )
    return (
        _TRANSPORT_MAGIC
        + struct.pack(">B", len(ctx.key.material))
        + ctx.key.material
        + ctx.kdf_salt
        + session_uuid
        + struct.pack(">I", int(ctx.ttl))
        + signature
    )


def _parse_transport_blob(blob: bytes) -> tuple[bytes, bytes, str, float, bytes]:
    if len(blob) < 5 or blob[:4] != _TRANSPORT_MAGIC:
        raise DecryptionError("malformed key transport")
    key_len = blob[4]
    offset = 5
    expected = offset + key_len + crypto.SALT_LENGTH + 16 + 4 + crypto.SIGNATURE_LENGTH
    if key_len not in crypto.SUPPORTED_KEY_SIZES or len(blob) != expected:
        raise DecryptionError("malformed key transport")
    key = blob[offset:offset + key_len]
    offset += key_len
    salt = blob[offset:offset + crypto.SALT_LENGTH]
    offset += crypto.SALT_LENGTH
    session_id = str(uuid.UUID(bytes=blob[offset:offset + 16]))
    offset += 16
    ttl = float(struct.unpack(">I", blob[offset:offset + 4])[0])
    offset += 4
    signature = blob[offset:]
    return key, salt, session_id, ttl, signature


def initiate_session(
    self_did: str,
    peer_did: str,
    peer_public_key: bytes,
    self_private_key: bytes,
    key_size: int = 32,
    iterations: int = crypto.DEFAULT_KDF_ITERATIONS,
    ttl: float = DEFAULT_SESSION_TTL,
    clock: Callable[[], datetime] = utcnow,
) -> SessionContext:
    """Derive a fresh session key for the DID pair.

    The password is the concatenated DIDs (initiator first); uniqueness
    comes from the random salt, which travels inside the key transport.
    """
    kdf_salt = crypto.generate_salt()
    password = (self_did + peer_did).encode("utf-8")
    key = crypto.derive_key(password, kdf_salt, key_size=key_size, iterations=iterations)
    return SessionContext(
        session_id=str(uuid.uuid4()),
        self_did=self_did,
        peer_did=peer_did,
        key=key,
        kdf_salt=kdf_salt,
        created_at=clock(),
        ttl=ttl,
        is_initiator=True,
        peer_public_key=bytes(peer_public_key),
        self_private_key=bytes(self_private_key),
        clock=clock,
    )


def wrap(ctx: SessionContext, payload: bytes) -> SecureEnvelope:
    """Seal a payload into the next outbound envelope.

    The initiator's first envelope carries the asymmetrically sealed
    (key, salt) bundle; everything after is symmetric-only.
    """
    if ctx.expired():
        raise SessionExpired(f"session {ctx.session_id} expired")
    counter = ctx.send_counter
    transport = None
    if ctx.is_initiator and counter == 0:
        if ctx.peer_public_key is None or ctx.self_private_key is None:
            raise InvalidInput("initiator context is missing key material")
        transport = crypto.seal_asymmetric(_build_transport_blob(ctx), ctx.peer_public_key)
    header = SecureEnvelope(
        session_id=ctx.session_id,
        sender_did=ctx.self_did,
        counter=counter,
        body=b"",
        key_transport=transport,
    ).header_bytes()
    body = crypto.seal_symmetric(payload, ctx.key, aad=header)
    ctx.send_counter += 1
    return SecureEnvelope(
        session_id=ctx.session_id,
        sender_did=ctx.self_did,
        counter=counter,
        body=body,
        key_transport=transport,
    )


class SessionStore:
    """One party's installed sessions, with atomic replay bookkeeping.

    When a ``resolver`` is given, inbound key transports must carry a valid
    signature from the claimed sender's registered key.
    """

    def __init__(
        self,
        self_did: str,
        resolver: Optional[VdrClient] = None,
        clock: Callable[[], datetime] = utcnow,
    ):
        self.self_did = self_did
        self.resolver = resolver
        self.clock = clock
        self._lock = threading.Lock()
        self._sessions: dict[str, SessionContext] = {}

    def add(self, ctx: SessionContext) -> None:
        with self._lock:
            self._sessions[ctx.session_id] = ctx

    def get(self, session_id: str) -> Optional[SessionContext]:
        with self._lock:
            return self._sessions.get(session_id)

    def _install_from_transport(
        self, envelope: SecureEnvelope, self_private_key: bytes
    ) -> SessionContext:
        if envelope.counter != 0:
            raise InvalidInput("key transport is only valid on the first message")
        key_material, salt, session_id, ttl, signature = _parse_transport_blob(
            crypto.open_asymmetric(envelope.key_transport, self_private_key)
        )
        if session_id != envelope.session_id:
            raise DecryptionError("key transport does not match the envelope session")
        if self.resolver is not None:
            document = self.resolver.resolve(envelope.sender_did)
            signed = _transport_signing_bytes(
                key_material, salt, session_id, ttl,
                envelope.sender_did, self.self_did,
            )
            try:
                ok = crypto.verify(signed, signature, document.public_key)
            except InvalidInput as exc:
                raise DecryptionError(f"transport signature malformed: {exc}") from exc
            if not ok:
                raise DecryptionError("transport signature does not verify")
        return SessionContext(
            session_id=session_id,
            self_did=self.self_did,
            peer_did=envelope.sender_did,
            key=crypto.SymmetricKey(material=key_material),
            kdf_salt=salt,
            created_at=self.clock(),
            ttl=ttl,
            is_initiator=False,
            self_private_key=bytes(self_private_key),
            clock=self.clock,
        )


def unwrap(
    envelope: SecureEnvelope,
    self_private_key: bytes,
    store: SessionStore,
) -> tuple[bytes, SessionContext]:
    """Authenticate and open an inbound envelope.

    Installs the session on a first message carrying key transport;
    otherwise the session must already be known.  Rejections are typed:
    UnknownSession, ReplayedCounter, SessionExpired, DecryptionError.
    """
    ctx = store.get(envelope.session_id)
    if ctx is None:
        if envelope.key_transport is None:
            raise UnknownSession(f"no session {envelope.session_id}")
        candidate = store._install_from_transport(envelope, self_private_key)
        with store._lock:
            ctx = store._sessions.setdefault(envelope.session_id, candidate)
    if envelope.sender_did != ctx.peer_did:
        raise DecryptionError("envelope sender does not match the session peer")
    now = store.clock()
    if ctx.expired(now):
        raise SessionExpired(f"session {ctx.session_id} expired")
    if envelope.counter <= ctx.recv_counter:
        raise ReplayedCounter(
            f"counter {envelope.counter} already seen (last {ctx.recv_counter})"
        )
    payload = crypto.open_symmetric(envelope.body, ctx.key, aad=envelope.header_bytes())
    with store._lock:
        if envelope.counter <= ctx.recv_counter:
            raise ReplayedCounter(
                f"counter {envelope.counter} already seen (last {ctx.recv_counter})"
            )
        ctx.recv_counter = envelope.counter
    return payload, ctx
