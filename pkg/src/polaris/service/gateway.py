"""Session-envelope tunnel: how clients talk to services after setup.

Once a requester has a session with a service, every request rides inside
a SecureEnvelope posted to the service's ``/session/envelope`` endpoint.
The inner payload is a minimal request frame {method, path, query, body}
and the reply comes back enveloped under the same session, so nothing but
envelope JSON ever crosses the wire.
"""

from __future__ import annotations

import json
from datetime import datetime
from typing import Callable, Optional

import httpx

from .. import crypto
from ..encoding import b64decode, b64encode, canonical_json, utcnow
from ..errors import InvalidInput, PolarisError, TransportError
from ..session import (
    SecureEnvelope,
    SessionContext,
    SessionStore,
    initiate_session,
    unwrap,
    wrap,
)
from ..vdr import VdrClient

# (status, body bytes) handler for one inner request.
Dispatch = Callable[[str, str, dict, bytes], tuple[int, bytes]]


def encode_inner_request(method: str, path: str, query: Optional[dict] = None,
                         body: bytes = b"") -> bytes:
    return canonical_json(
        {
            "method": method.upper(),
            "path": path,
            "query": {k: str(v) for k, v in (query or {}).items()},
            "body": b64encode(body),
        }
    )


def decode_inner_request(payload: bytes) -> tuple[str, str, dict, bytes]:
    try:
        data = json.loads(payload.decode("utf-8"))
        return (
            data["method"],
            data["path"],
            dict(data.get("query", {})),
            b64decode(data.get("body", ""), what="body"),
        )
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise InvalidInput(f"malformed inner request: {exc}") from exc


def encode_inner_response(status: int, body: bytes) -> bytes:
    return canonical_json({"status": status, "body": b64encode(body)})


def decode_inner_response(payload: bytes) -> tuple[int, bytes]:
    try:
        data = json.loads(payload.decode("utf-8"))
        return int(data["status"]), b64decode(data.get("body", ""), what="body")
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise InvalidInput(f"malformed inner response: {exc}") from exc


class EnvelopeGateway:
    """Service-side endpoint: unwrap, dispatch, wrap the reply."""

    def __init__(
        self,
        did: str,
        keypair: crypto.KeyPair,
        dispatch: Dispatch,
        registry: Optional[VdrClient] = None,
        clock: Callable[[], datetime] = utcnow,
    ):
        self.did = did
        self.keypair = keypair
        self.dispatch = dispatch
        self.store = SessionStore(self_did=did, resolver=registry, clock=clock)

    def handle(self, envelope_json: bytes) -> bytes:
        envelope = SecureEnvelope.from_json(envelope_json)
        payload, ctx = unwrap(envelope, self.keypair.private_key, self.store)
        method, path, query, body = decode_inner_request(payload)
        status, response_body = self.dispatch(method, path, query, body)
        reply = wrap(ctx, encode_inner_response(status, response_body))
        return reply.to_json()


# Transport moves one envelope to the peer and returns the reply envelope.
EnvelopeTransport = Callable[[bytes], bytes]


def http_envelope_transport(base_url: str, client: Optional[httpx.Client] = None,
                            timeout: float = 10.0) -> EnvelopeTransport:
    """Envelope transport over POST /session/envelope."""
    http = client or httpx.Client(base_url=base_url, timeout=timeout)

    def send(envelope_json: bytes) -> bytes:
        try:
            response = http.post(
                "/session/envelope",
                content=envelope_json,
                headers={"content-type": "application/json"},
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"service unreachable: {exc}") from exc
        if response.status_code != 200:
            detail = response.text[:200]
            raise TransportError(
                f"envelope endpoint returned {response.status_code}: {detail}"
            )
        return response.content

    return send


class SessionTunnel:
    """Client-side session: wraps requests, unwraps enveloped replies."""

    def __init__(
        self,
        self_did: str,
        keypair: crypto.KeyPair,
        peer_did: str,
        peer_public_key: bytes,
        transport: EnvelopeTransport,
        ttl: float = 600.0,
        clock: Callable[[], datetime] = utcnow,
    ):
        self._keypair = keypair
        self._transport = transport
        self.ctx: SessionContext = initiate_session(
            self_did=self_did,
            peer_did=peer_did,
            peer_public_key=peer_public_key,
            self_private_key=keypair.private_key,
            ttl=ttl,
            clock=clock,
        )
        self._store = SessionStore(self_did=self_did, clock=clock)
        self._store.add(self.ctx)

    def request(self, method: str, path: str, query: Optional[dict] = None,
                body: bytes = b"") -> tuple[int, bytes]:
        envelope = wrap(self.ctx, encode_inner_request(method, path, query, body))
        reply_json = self._transport(envelope.to_json())
        reply = SecureEnvelope.from_json(reply_json)
        payload, _ = unwrap(reply, self._keypair.private_key, self._store)
        return decode_inner_response(payload)

    def request_json(self, method: str, path: str, query: Optional[dict] = None,
                     payload: Optional[dict] = None) -> tuple[int, dict]:
        body = canonical_json(payload) if payload is not None else b""
        status, raw = self.request(method, path, query, body)
        data = json.loads(raw.decode("utf-8")) if raw else {}
        return status, data


def error_payload(exc: PolarisError) -> dict:
    return {"error": type(exc).__name__, "detail": str(exc)}
