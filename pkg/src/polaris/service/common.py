"""Bits shared by the service apps: identities and error mapping."""

from __future__ import annotations

from dataclasses import dataclass

from .. import crypto
from ..errors import (
    AuthenticationFailure,
    GrantInvalid,
    InvalidInput,
    NotFound,
    PolarisError,
    PolicyError,
    PolicyIntegrityError,
    PresentationError,
    ReplayedCounter,
    ReplayedPresentation,
    SessionExpired,
    TransportError,
    UnknownSession,
)


@dataclass(frozen=True)
class ServiceIdentity:
    """A service's own DID plus the keypair behind it."""

    did: str
    keypair: crypto.KeyPair


_STATUS_BY_TYPE = [
    (ReplayedPresentation, 409),
    (AuthenticationFailure, 401),
    (GrantInvalid, 403),
    (PolicyIntegrityError, 500),
    (NotFound, 404),
    (ReplayedCounter, 409),
    (SessionExpired, 410),
    (UnknownSession, 400),
    (PresentationError, 401),
    (PolicyError, 400),
    (InvalidInput, 400),
    (TransportError, 502),
]


def http_status_for(exc: PolarisError) -> int:
    for exc_type, status in _STATUS_BY_TYPE:
        if isinstance(exc, exc_type):
            return status
    return 500
