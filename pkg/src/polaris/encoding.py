"""Canonical serialization and small wire-encoding helpers.

Every signature in this package is computed over *canonical JSON*: UTF-8,
lexicographically sorted keys, no insignificant whitespace.  Producing the
same bytes for the same logical document on every platform is what makes
signing structured documents possible at all, so all signable structures
funnel through :func:`canonical_json`.

Field encodings are fixed per kind: digests, salts, nonces, and tokens are
lowercase hex; keys, signatures, ciphertexts, and content bytes are padded
standard base64.
"""

from __future__ import annotations

import base64
import binascii
import json
from datetime import datetime, timezone

from .errors import InvalidInput


def canonical_json(obj) -> bytes:
    """Serialize to canonical JSON bytes (sorted keys, compact, UTF-8)."""
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def b64encode(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def b64decode(text: str, *, what: str = "value") -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, ValueError, UnicodeEncodeError) as exc:
        raise InvalidInput(f"{what} is not valid base64: {exc}") from exc


def hexencode(data: bytes) -> str:
    return data.hex()


def hexdecode(text: str, *, what: str = "value") -> bytes:
    try:
        return bytes.fromhex(text)
    except (ValueError, TypeError) as exc:
        raise InvalidInput(f"{what} is not valid hex: {exc}") from exc


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def to_timestamp(dt: datetime) -> str:
    """Render an aware datetime as an ISO-8601 string with second precision."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0).isoformat()


def from_timestamp(text: str, *, what: str = "timestamp") -> datetime:
    try:
        dt = datetime.fromisoformat(text)
    except ValueError as exc:
        raise InvalidInput(f"{what} is not ISO-8601: {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt
