"""Shared fixtures.

Keypair generation costs ~50 ms (RSA transport half), so tests share a
session-scoped pool of identities wherever freshness is not the point.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from polaris import crypto
from polaris.vdr import DidRegistry, LocalVdrClient


@pytest.fixture(scope="session")
def keypool():
    """Memoized keypair factory: keypool('issuer') is stable per session."""
    pool: dict[str, crypto.KeyPair] = {}

    def get(name: str) -> crypto.KeyPair:
        if name not in pool:
            pool[name] = crypto.generate_keypair()
        return pool[name]

    return get


class FakeClock:
    """Manually advanced clock for TTL and expiry tests."""

    def __init__(self, start: datetime | None = None):
        self.now = start or datetime(2026, 1, 1, tzinfo=timezone.utc)

    def __call__(self) -> datetime:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += timedelta(seconds=seconds)


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def registry():
    return DidRegistry()


@pytest.fixture
def vdr_client(registry):
    return LocalVdrClient(registry)


@pytest.fixture
def identity(registry, keypool):
    """(did, keypair) registered in the test registry."""

    def make(name: str):
        keys = keypool(name)
        did = registry.register(keys.public_key, keys.algorithm, name)
        return did, keys

    return make
