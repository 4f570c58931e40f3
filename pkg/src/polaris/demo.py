"""Scripted end-to-end scenarios over in-process services.

Each scenario builds a fresh world (registry, issuer, holder, owner,
resource server with an in-process decision point), walks the full flow --
register identities, issue a multi-attribute credential, upload a resource
under a two-rule policy, present selectively, request access, fetch the
content -- and reports a distinct exit status for the outcome it hit.

Every inter-role message after session establishment travels inside a
session envelope; the in-process transport can be captured to assert that.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import crypto
from .access import AuthorizationService, LocalAuthzClient, ResourceService
from .encoding import b64encode, canonical_json
from .errors import PolarisError, ReplayedPresentation
from .issuance import (
    AttributeClaim,
    Issuer,
    VerifiableCredential,
    Wallet,
    answer_challenge,
)
from .presentation import DisclosureSelection, SignedPresentation, build_presentation
from .service.gateway import EnvelopeGateway, SessionTunnel
from .service.resource_app import _Handlers
from .session import SecureEnvelope, SessionStore, initiate_session, unwrap, wrap
from .vdr import DidRegistry, LocalVdrClient
from .vppl import parse_policy, sign_policy

# Exit statuses double as outcome signals for scripted variants.
EXIT_GRANTED = 0
EXIT_UNEXPECTED = 1
EXIT_DENIED = 2
EXIT_AUTH_FAILURE = 3
EXIT_REPLAY_REJECTED = 4

SCENARIOS = ("qualified", "under-qualified", "tampered", "replay")

QUALIFIED_CLAIMS = {
    "degree": "PhD",
    "age": "25",
    "status": "active",
    "email": "holder@example.org",
    "name": "Jordan Holder",
}

UNDERQUALIFIED_CLAIMS = {
    "degree": "BSc",
    "age": "17",
    "status": "active",
    "email": "junior@example.org",
    "name": "Casey Junior",
}

DISCLOSED_ATTRIBUTES = ("degree", "age")

RESOURCE_CONTENT = b"confidential dataset: " + bytes(range(64))


def demo_policy_dict(issuer_did: str) -> dict:
    """Two rules: permit qualified holders from the trusted issuer,
    deny anyone presenting a revoked status."""
    return {
        "policy_id": "demo-policy-0001",
        "combining": "permit-overrides",
        "rules": [
            {
                "decision": "permit",
                "issuers": [issuer_did],
                "conditions": [
                    {"attr": "claims.degree", "fn": "==", "value": "PhD", "type": "string"},
                    {"attr": "claims.age", "fn": ">=", "value": 18, "type": "int"},
                ],
            },
            {
                "decision": "deny",
                "issuers": [],
                "conditions": [
                    {"attr": "claims.status", "fn": "==", "value": "revoked", "type": "string"},
                ],
            },
        ],
    }


@dataclass
class DemoResult:
    exit_code: int
    steps: list[str] = field(default_factory=list)
    detail: dict = field(default_factory=dict)


class DemoWorld:
    """All roles wired together in one process."""

    def __init__(self, capture: Optional[list] = None,
                 printer: Callable[[str], None] = lambda line: None):
        self.capture = capture
        self.printer = printer
        self.steps: list[str] = []

        self.registry = DidRegistry()
        self.vdr = LocalVdrClient(self.registry)

        self.issuer_keys = crypto.generate_keypair()
        self.holder_keys = crypto.generate_keypair()
        self.owner_keys = crypto.generate_keypair()
        self.rs_keys = crypto.generate_keypair()

        self.issuer_did = self._register("issuer", self.issuer_keys)
        self.holder_did = self._register("holder", self.holder_keys)
        self.owner_did = self._register("owner", self.owner_keys)
        self.rs_did = self._register("resource-server", self.rs_keys)

        self.issuer = Issuer(self.issuer_did, self.issuer_keys, self.vdr)
        self.wallet = Wallet()

        self.authz = AuthorizationService(self.vdr)
        self.resource_service = ResourceService(
            registry=self.vdr, authz=LocalAuthzClient(self.authz)
        )
        handlers = _Handlers(self.resource_service)
        self.gateway = EnvelopeGateway(
            did=self.rs_did,
            keypair=self.rs_keys,
            dispatch=handlers.dispatch,
            registry=self.vdr,
        )

    def _register(self, role: str, keys: crypto.KeyPair) -> str:
        did = self.vdr.register(keys.public_key, keys.algorithm, f"demo-{role}")
        self._step(f"register-{role}-did", did)
        return did

    def _step(self, name: str, detail: str = "") -> None:
        self.steps.append(name)
        line = f"[{name}] {detail}".rstrip()
        self.printer(line)

    def _transport(self, envelope_json: bytes) -> bytes:
        if self.capture is not None:
            self.capture.append(("to-rs", envelope_json))
        reply = self.gateway.handle(envelope_json)
        if self.capture is not None:
            self.capture.append(("from-rs", reply))
        return reply

    def tunnel_for(self, did: str, keys: crypto.KeyPair) -> SessionTunnel:
        return SessionTunnel(
            self_did=did,
            keypair=keys,
            peer_did=self.rs_did,
            peer_public_key=self.registry.resolve(self.rs_did).public_key,
            transport=self._transport,
        )

    # -- identity acquisition --------------------------------------------

    def issue_credential(self, claims: dict) -> str:
        """Challenge-response issuance; the credential and salts come back
        to the holder inside a session envelope."""
        challenge = self.issuer.create_challenge(self.holder_did)
        response = answer_challenge(challenge, self.holder_keys.private_key)
        self._step("challenge-response", "holder proves key possession")
        vc, salts = self.issuer.issue(
            response,
            [AttributeClaim(name, value) for name, value in sorted(claims.items())],
            schema="demo/person",
        )
        delivery = canonical_json(
            {
                "credential": vc.to_dict(),
                "salts": {name: salt.hex() for name, salt in salts.items()},
            }
        )
        issuer_ctx = initiate_session(
            self_did=self.issuer_did,
            peer_did=self.holder_did,
            peer_public_key=self.registry.resolve(self.holder_did).public_key,
            self_private_key=self.issuer_keys.private_key,
        )
        envelope = wrap(issuer_ctx, delivery)
        holder_store = SessionStore(self_did=self.holder_did, resolver=self.vdr)
        payload, _ = unwrap(
            SecureEnvelope.from_json(envelope.to_json()),
            self.holder_keys.private_key,
            holder_store,
        )
        received = json.loads(payload.decode("utf-8"))
        credential = VerifiableCredential.from_dict(received["credential"])
        self.wallet.add(
            credential,
            {name: bytes.fromhex(hexsalt) for name, hexsalt in received["salts"].items()},
            dict(claims),
        )
        self._step("issue-credential", credential.metadata.credential_id)
        return credential.metadata.credential_id

    # -- resource upload ---------------------------------------------------

    def upload_resource(self) -> str:
        policy = parse_policy(canonical_json(demo_policy_dict(self.issuer_did)))
        policy = sign_policy(policy, self.owner_did, self.owner_keys.private_key)
        tunnel = self.tunnel_for(self.owner_did, self.owner_keys)
        status, body = tunnel.request_json(
            "POST",
            "/resource",
            payload={
                "owner_did": self.owner_did,
                "content": b64encode(RESOURCE_CONTENT),
                "description": "demo dataset",
                "policy": policy.to_dict(),
            },
        )
        if status != 200:
            raise PolarisError(f"upload failed: {body}")
        self._step("upload-resource", body["resource_id"])
        return body["resource_id"]

    # -- access flow -------------------------------------------------------

    def build_demo_presentation(self, credential_id: str) -> SignedPresentation:
        selection = DisclosureSelection.of(credential_id, *DISCLOSED_ATTRIBUTES)
        message = build_presentation(
            wallet=self.wallet,
            selections=[selection],
            audience=self.owner_did,
            holder_did=self.holder_did,
            holder_private_key=self.holder_keys.private_key,
        )
        self._step("build-presentation", f"disclosing {', '.join(DISCLOSED_ATTRIBUTES)}")
        return message

    def request_access(self, tunnel: SessionTunnel, resource_id: str,
                       message: SignedPresentation) -> tuple[int, dict]:
        status, body = tunnel.request_json(
            "POST",
            f"/resource/{resource_id}/access",
            payload={"signed_presentation": message.to_dict()},
        )
        self._step("request-access", f"status={status}")
        return status, body

    def fetch_content(self, tunnel: SessionTunnel, resource_id: str, token: str) -> bytes:
        status, raw = tunnel.request(
            "GET", f"/resource/{resource_id}/content", query={"token": token}
        )
        if status != 200:
            raise PolarisError(f"content fetch failed with status {status}")
        self._step("fetch-content", f"{len(raw)} bytes")
        return raw


def _tamper_presentation(message: SignedPresentation) -> SignedPresentation:
    """Flip one disclosed value after signing; verification must fail."""
    data = message.to_dict()
    data["entries"][0]["disclosed"][0]["value"] += "-tampered"
    return SignedPresentation.from_dict(data)


def run_demo(
    scenario: str = "qualified",
    printer: Callable[[str], None] = print,
    capture: Optional[list] = None,
) -> DemoResult:
    """Run one scripted scenario; the exit code signals the outcome."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; pick from {SCENARIOS}")
    world = DemoWorld(capture=capture, printer=printer)
    result = DemoResult(exit_code=EXIT_UNEXPECTED, steps=world.steps)
    try:
        claims = UNDERQUALIFIED_CLAIMS if scenario == "under-qualified" else QUALIFIED_CLAIMS
        credential_id = world.issue_credential(claims)
        resource_id = world.upload_resource()
        tunnel = world.tunnel_for(world.holder_did, world.holder_keys)

        status, record = tunnel.request_json("GET", f"/resource/{resource_id}")
        world._step("fetch-directory-record", record.get("owner_did", "?"))
        status, policy_body = tunnel.request("GET", f"/resource/{resource_id}/policy")
        world._step("fetch-policy", f"{len(policy_body)} bytes")

        message = world.build_demo_presentation(credential_id)
        if scenario == "tampered":
            message = _tamper_presentation(message)

        status, body = world.request_access(tunnel, resource_id, message)

        if scenario == "tampered":
            if status == 401:
                world._step("outcome", "authentication failure as expected")
                result.exit_code = EXIT_AUTH_FAILURE
            return result

        if scenario == "under-qualified":
            if status == 200 and not body.get("granted", True):
                outcome = body["denial"]["decision"]["outcome"]
                world._step("outcome", f"denied ({outcome})")
                result.detail["decision"] = body["denial"]["decision"]
                result.exit_code = EXIT_DENIED
            return result

        if status != 200 or not body.get("granted"):
            world._step("outcome", f"unexpected access result: {status}")
            return result
        token = body["grant"]["token"]
        result.detail["grant"] = body["grant"]

        if scenario == "replay":
            replay_status, replay_body = world.request_access(tunnel, resource_id, message)
            if replay_status == 409:
                world._step("outcome", "replayed presentation rejected")
                result.exit_code = EXIT_REPLAY_REJECTED
            else:
                world._step("outcome", f"replay unexpectedly returned {replay_status}")
            return result

        content = world.fetch_content(tunnel, resource_id, token)
        if content == RESOURCE_CONTENT:
            world._step("outcome", "fetched bytes match uploaded bytes")
            result.exit_code = EXIT_GRANTED
        else:
            world._step("outcome", "fetched bytes differ from uploaded bytes")
    except ReplayedPresentation:
        result.exit_code = EXIT_REPLAY_REJECTED
    except PolarisError as exc:
        world._step("error", f"{type(exc).__name__}: {exc}")
        result.detail["error"] = str(exc)
    return result


def run_all_scenarios(printer: Callable[[str], None] = print) -> dict[str, DemoResult]:
    """Run the four scripted scenarios; used by the acceptance suite."""
    results = {}
    for scenario in SCENARIOS:
        printer(f"=== scenario: {scenario} ===")
        results[scenario] = run_demo(scenario, printer=printer)
    return results
