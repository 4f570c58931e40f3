"""Benchmark harness: session-key vs per-message PKI, and service load.

``bench_kd`` compares two ways of protecting a multi-round exchange:

* ``kd-session`` — one key derivation plus one asymmetric transport at
  session start, then symmetric-only envelopes.
* ``pki-per-message`` — the classical baseline: every message carries a
  freshly wrapped symmetric key under the (cached) peer public key and a
  signature over the payload, verified on receipt.

Timing covers cryptographic work and in-memory message handoff; wire
serialization is identical in both modes and excluded so the comparison
isolates the mechanism difference.

``bench_load`` drives the registry service in-process with an open-loop
scheduler (fixed send rate, unbounded concurrency) and reports achieved
throughput, latency percentiles, and success rate.
"""

from __future__ import annotations

import asyncio
import json
import os
import time
from dataclasses import dataclass, field
from typing import Awaitable, Callable, Optional

from . import crypto
from .encoding import b64encode, canonical_json
from .issuance import Issuer, answer_challenge
from .service.vdr_app import create_vdr_app
from .session import SessionStore, initiate_session, unwrap, wrap
from .vdr import DidDocument, DidRegistry, LocalVdrClient

MAX_PAYLOAD = 16 * 1024 * 1024

MODE_KD = "kd-session"
MODE_PKI = "pki-per-message"
MODES = (MODE_KD, MODE_PKI)

LOAD_OPS = ("resolve", "register", "request_vc_path")

# Published baseline timings of the same operations on a blockchain-backed
# deployment; printed for context only, never asserted against.
REFERENCE_BASELINE_MS = {
    "register_did": 2466.0,
    "upload_resource": 58.981,
    "request_vc": 62.676,
    "receive_vc": 106.813,
    "authentication": 62.188,
    "authorization": 88.92,
    "access_resource": 51.933,
}


@dataclass
class BenchReport:
    scenario: str
    payload_size: int
    rounds: float
    mode: str
    total_time_ms: float
    messages: int
    asym_ops: int
    breakdown_ms: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "payload_size": self.payload_size,
            "rounds": self.rounds,
            "mode": self.mode,
            "total_time_ms": round(self.total_time_ms, 3),
            "messages": self.messages,
            "asym_ops": self.asym_ops,
            "breakdown_ms": {k: round(v, 3) for k, v in self.breakdown_ms.items()},
        }


@dataclass
class LoadReport:
    op: str
    target_rate: float
    duration: float
    sent: int
    completed: int
    achieved_throughput: float
    success_rate: float
    latency_ms: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "op": self.op,
            "target_rate": self.target_rate,
            "duration": self.duration,
            "sent": self.sent,
            "completed": self.completed,
            "achieved_throughput": round(self.achieved_throughput, 1),
            "success_rate": round(self.success_rate, 4),
            "latency_ms": {k: round(v, 3) for k, v in self.latency_ms.items()},
            "reference_baseline_ms": REFERENCE_BASELINE_MS,
        }


# ----------------------------------------------------------------------
# Session-key vs per-message PKI
# ----------------------------------------------------------------------


class _Party:
    def __init__(self, registry: DidRegistry, label: str):
        self.keys = crypto.generate_keypair()
        client = LocalVdrClient(registry)
        self.did = client.register(self.keys.public_key, self.keys.algorithm, label)
        self.vdr = client


def _message_count(rounds: float) -> int:
    messages = round(rounds * 2)
    if messages < 1 or abs(rounds * 2 - messages) > 1e-9:
        raise ValueError("rounds must be a positive multiple of 0.5")
    return messages


def _warm_party_keys(party: "_Party") -> None:
    """Parse and exercise the key objects outside the timed window.

    DER key loading validates the RSA key and costs tens of milliseconds,
    a one-time setup expense that would otherwise swamp the per-message
    comparison.
    """
    sealed = crypto.seal_asymmetric(b"warm", party.keys.public_key)
    crypto.open_asymmetric(sealed, party.keys.private_key)
    signature = crypto.sign(b"warm", party.keys.private_key)
    crypto.verify(b"warm", signature, party.keys.public_key)


def bench_kd(payload_size: int, rounds: float, mode: str,
             key_size: int = 32,
             iterations: int = crypto.DEFAULT_KDF_ITERATIONS) -> BenchReport:
    """Measure one exchange scenario; see the module docstring for modes."""
    if payload_size < 0 or payload_size > MAX_PAYLOAD:
        raise ValueError(f"payload_size must be within [0, {MAX_PAYLOAD}]")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    messages = _message_count(rounds)

    registry = DidRegistry()
    alice = _Party(registry, "bench-a")
    bob = _Party(registry, "bench-b")
    _warm_party_keys(alice)
    _warm_party_keys(bob)
    payload = os.urandom(payload_size)
    asym_before = crypto.asymmetric_op_count()
    breakdown: dict[str, float] = {}

    if mode == MODE_KD:
        total, breakdown = _run_kd(alice, bob, payload, messages, key_size, iterations)
    else:
        total, breakdown = _run_pki(alice, bob, payload, messages)

    return BenchReport(
        scenario=f"{mode}/{payload_size}B/{rounds}r",
        payload_size=payload_size,
        rounds=rounds,
        mode=mode,
        total_time_ms=total * 1000.0,
        messages=messages,
        asym_ops=crypto.asymmetric_op_count() - asym_before,
        breakdown_ms={k: v * 1000.0 for k, v in breakdown.items()},
    )


def _run_kd(alice: _Party, bob: _Party, payload: bytes, messages: int,
            key_size: int, iterations: int) -> tuple[float, dict[str, float]]:
    bob_store = SessionStore(self_did=bob.did, resolver=bob.vdr)
    alice_store = SessionStore(self_did=alice.did, resolver=alice.vdr)
    bob_pub = alice.vdr.resolve(bob.did).public_key

    start = time.perf_counter()
    ctx_a = initiate_session(
        self_did=alice.did,
        peer_did=bob.did,
        peer_public_key=bob_pub,
        self_private_key=alice.keys.private_key,
        key_size=key_size,
        iterations=iterations,
    )
    alice_store.add(ctx_a)
    setup_done = time.perf_counter()

    ctx_b = None
    for i in range(messages):
        if i % 2 == 0:
            envelope = wrap(ctx_a, payload)
            received, ctx_b = unwrap(envelope, bob.keys.private_key, bob_store)
        else:
            envelope = wrap(ctx_b, payload)
            received, _ = unwrap(envelope, alice.keys.private_key, alice_store)
        assert received == payload
    end = time.perf_counter()
    return end - start, {
        "session_setup": setup_done - start,
        "messaging": end - setup_done,
    }


def _run_pki(alice: _Party, bob: _Party, payload: bytes,
             messages: int) -> tuple[float, dict[str, float]]:
    wrap_time = 0.0
    sign_time = 0.0
    symmetric_time = 0.0

    start = time.perf_counter()
    # Peer keys are fetched once and cached for the whole exchange.
    keys = {
        alice.did: (alice.keys, alice.vdr.resolve(bob.did).public_key),
        bob.did: (bob.keys, bob.vdr.resolve(alice.did).public_key),
    }
    for i in range(messages):
        sender_did = alice.did if i % 2 == 0 else bob.did
        receiver = bob if i % 2 == 0 else alice
        sender_keys, receiver_pub = keys[sender_did]

        t0 = time.perf_counter()
        fresh = crypto.SymmetricKey(material=os.urandom(32))
        body = crypto.seal_symmetric(payload, fresh)
        t1 = time.perf_counter()
        wrapped_key = crypto.seal_asymmetric(fresh.material, receiver_pub)
        t2 = time.perf_counter()
        signature = crypto.sign(payload, sender_keys.private_key)
        t3 = time.perf_counter()

        # Receiver side: unwrap the key, open the body, verify the origin.
        key_material = crypto.open_asymmetric(wrapped_key, receiver.keys.private_key)
        t4 = time.perf_counter()
        received = crypto.open_symmetric(body, crypto.SymmetricKey(material=key_material))
        t5 = time.perf_counter()
        sender_pub = receiver.vdr.resolve(sender_did).public_key
        if not crypto.verify(received, signature, sender_pub):
            raise AssertionError("pki-per-message signature must verify")
        t6 = time.perf_counter()

        symmetric_time += (t1 - t0) + (t5 - t4)
        wrap_time += (t2 - t1) + (t4 - t3)
        sign_time += (t3 - t2) + (t6 - t5)
        assert received == payload
    end = time.perf_counter()
    return end - start, {
        "key_wrap": wrap_time,
        "signing": sign_time,
        "symmetric": symmetric_time,
    }


# ----------------------------------------------------------------------
# Open-loop load generation
# ----------------------------------------------------------------------


AsyncOp = Callable[[int], Awaitable[bool]]

_JSON_HEADERS = [(b"content-type", b"application/json")]


async def asgi_request(app, method: str, path: str, query: bytes = b"",
                       body: bytes = b"") -> tuple[int, bytes]:
    """Drive one request straight into an ASGI app.

    The load generator deliberately skips an HTTP client stack so the
    measured cost is dominated by the service, not the driver.
    """
    headers = list(_JSON_HEADERS)
    if body:
        headers.append((b"content-length", str(len(body)).encode("ascii")))
    scope = {
        "type": "http",
        "asgi": {"version": "3.0", "spec_version": "2.3"},
        "http_version": "1.1",
        "method": method,
        "scheme": "http",
        "path": path,
        "raw_path": path.encode("utf-8"),
        "query_string": query,
        "root_path": "",
        "headers": headers,
        "client": ("127.0.0.1", 9999),
        "server": ("loadgen", 80),
    }
    sent = False

    async def receive():
        nonlocal sent
        if sent:
            return {"type": "http.disconnect"}
        sent = True
        return {"type": "http.request", "body": body, "more_body": False}

    status = 500
    chunks: list[bytes] = []

    async def send(message):
        nonlocal status
        if message["type"] == "http.response.start":
            status = message["status"]
        elif message["type"] == "http.response.body":
            chunks.append(message.get("body", b""))

    await app(scope, receive, send)
    return status, b"".join(chunks)


async def _open_loop(op: AsyncOp, rate: float, duration: float,
                     timeout: float = 2.0) -> tuple[int, list[Optional[float]], float]:
    """Fire requests at a fixed rate; never wait for responses to send more."""
    loop = asyncio.get_running_loop()
    total = max(1, int(rate * duration))
    start = loop.time()

    async def timed(index: int, scheduled: float) -> Optional[float]:
        try:
            ok = await asyncio.wait_for(op(index), timeout=timeout)
        except asyncio.TimeoutError:
            return None
        except Exception:
            return None
        if not ok:
            return None
        return loop.time() - scheduled

    tasks = []
    for i in range(total):
        scheduled = start + i / rate
        delay = scheduled - loop.time()
        if delay > 0:
            await asyncio.sleep(delay)
        tasks.append(asyncio.create_task(timed(i, scheduled)))
    latencies = await asyncio.gather(*tasks)
    makespan = loop.time() - start
    return total, list(latencies), makespan


def _percentiles(samples: list[float]) -> dict[str, float]:
    if not samples:
        return {"p50": 0.0, "p95": 0.0, "p99": 0.0}
    ordered = sorted(samples)

    def pick(q: float) -> float:
        index = min(len(ordered) - 1, int(q * len(ordered)))
        return ordered[index] * 1000.0

    return {"p50": pick(0.50), "p95": pick(0.95), "p99": pick(0.99)}


class LoadWorld:
    """In-process registry service plus the client fixtures the ops need."""

    def __init__(self):
        self.registry = DidRegistry()
        self.app = create_vdr_app(self.registry)
        self.keys = crypto.generate_keypair()
        local = LocalVdrClient(self.registry)
        self.seed_did = local.register(self.keys.public_key, self.keys.algorithm, "seed")
        self.issuer = Issuer(self.seed_did, self.keys, local)
        self.holder_keys = crypto.generate_keypair()
        self.holder_did = local.register(
            self.holder_keys.public_key, self.holder_keys.algorithm, "load-holder"
        )
        self._register_body = {
            "public_key": b64encode(self.keys.public_key),
            "algorithm": self.keys.algorithm,
            "uuid": "load",
        }

    def make_op(self, op_name: str) -> AsyncOp:
        if op_name == "resolve":
            path = f"/did/resolve/{self.seed_did}"

            async def resolve_op(_: int) -> bool:
                status, _body = await asgi_request(self.app, "GET", path)
                return status == 200

            return resolve_op
        if op_name == "register":

            async def register_op(index: int) -> bool:
                body = canonical_json(dict(self._register_body, uuid=f"load-{index}"))
                status, _body = await asgi_request(
                    self.app, "POST", "/did/register", body=body
                )
                return status == 200

            return register_op
        if op_name == "request_vc_path":
            resolve_path = f"/did/resolve/{self.holder_did}"

            async def request_vc_op(_: int) -> bool:
                challenge = self.issuer.create_challenge(self.holder_did)
                answer = answer_challenge(challenge, self.holder_keys.private_key)
                status, body = await asgi_request(self.app, "GET", resolve_path)
                if status != 200:
                    return False
                document = DidDocument.from_dict(json.loads(body))
                ok = crypto.verify(
                    answer.challenge.signing_bytes(), answer.signature,
                    document.public_key,
                )
                return ok and self.issuer.verify_challenge_response(answer)

            return request_vc_op
        raise ValueError(f"op must be one of {LOAD_OPS}")


def bench_load(op: str, rate: float, duration: float,
               world: Optional[LoadWorld] = None,
               timeout: float = 2.0) -> LoadReport:
    """Open-loop load against the in-process registry service."""
    if op not in LOAD_OPS:
        raise ValueError(f"op must be one of {LOAD_OPS}")
    world = world or LoadWorld()

    async def run() -> LoadReport:
        async_op = world.make_op(op)
        sent, latencies, makespan = await _open_loop(async_op, rate, duration, timeout)
        successes = [lat for lat in latencies if lat is not None]
        # The measurement window is never shorter than the nominal send
        # window, so the achieved rate cannot exceed the offered rate.
        window = max(makespan, sent / rate if rate > 0 else makespan)
        return LoadReport(
            op=op,
            target_rate=rate,
            duration=duration,
            sent=sent,
            completed=len(successes),
            achieved_throughput=len(successes) / window if window > 0 else 0.0,
            success_rate=len(successes) / sent if sent else 0.0,
            latency_ms=_percentiles(successes),
        )

    return asyncio.run(run())


def find_saturation(op: str, start_rate: float = 100.0, factor: float = 1.6,
                    window: float = 1.0, max_rate: float = 100_000.0,
                    refine_steps: int = 3,
                    world: Optional[LoadWorld] = None) -> tuple[float, list[LoadReport]]:
    """Ramp the send rate until the service stops keeping up.

    A rate "holds" when every request succeeds and achieved throughput
    stays within 90% of target.  After the geometric ramp finds the first
    failing rate, a few bisection steps tighten the estimate.  Returns the
    highest sustained throughput plus the full measurement history.
    """
    world = world or LoadWorld()
    history: list[LoadReport] = []

    def holds(rate: float) -> tuple[bool, LoadReport]:
        report = bench_load(op, rate, window, world=world)
        history.append(report)
        ok = report.success_rate >= 0.999 and report.achieved_throughput >= 0.9 * rate
        return ok, report

    saturation = 0.0
    good = 0.0
    rate = start_rate
    failed = None
    while rate <= max_rate:
        ok, report = holds(rate)
        if ok:
            good = rate
            saturation = report.achieved_throughput
            rate *= factor
        else:
            failed = rate
            break
    if failed is not None and good > 0.0:
        low, high = good, failed
        for _ in range(refine_steps):
            mid = (low + high) / 2.0
            ok, report = holds(mid)
            if ok:
                low = mid
                saturation = max(saturation, report.achieved_throughput)
            else:
                high = mid
    return saturation, history
