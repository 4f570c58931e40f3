"""Command-line driver for every role.

The CLI is a thin client: identities live in local JSON files, services
run via uvicorn, and the resource commands talk to a running resource
server through the session-envelope tunnel.  ``demo`` and ``bench`` spin
up everything in-process.
"""

from __future__ import annotations

import json
import os
import sys
from datetime import timedelta
from pathlib import Path

import click

from . import bench as bench_mod
from . import crypto, demo as demo_mod
from .access import (
    AuthorizationService,
    FileContentStore,
    HttpAuthzClient,
    LocalAuthzClient,
    ResourceService,
)
from .encoding import b64decode, b64encode
from .errors import PolarisError
from .issuance import AttributeClaim, Issuer, Wallet, answer_challenge
from .presentation import (
    DisclosureSelection,
    SignedPresentation,
    VerifiedAttributes,
    VerifiedTriple,
    build_presentation,
)
from .service import (
    ServiceIdentity,
    create_authz_app,
    create_resource_app,
    create_vdr_app,
)
from .service.gateway import SessionTunnel, http_envelope_transport
from .vdr import DidRegistry, FileJournalDidStore, HttpVdrClient, InMemoryDidStore
from .vppl import (
    Decision,
    evaluate_policy,
    parse_policy,
    serialize_policy,
    sign_policy,
)

DEFAULT_VDR_ADDR = "127.0.0.1:8401"
DEFAULT_RS_ADDR = "127.0.0.1:8402"
DEFAULT_AS_ADDR = "127.0.0.1:8403"


def _fail(message: str) -> "click.exceptions.Exit":
    click.echo(f"error: {message}", err=True)
    return SystemExit(1)


def _split_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise _fail(f"address must look like host:port, got {addr!r}")
    return host, int(port)


def _load_identity(path: str) -> tuple[crypto.KeyPair, str | None]:
    data = json.loads(Path(path).read_text())
    keypair = crypto.KeyPair(
        public_key=b64decode(data["public_key"], what="public_key"),
        private_key=b64decode(data["private_key"], what="private_key"),
        algorithm=data.get("algorithm", crypto.ALGORITHM),
    )
    return keypair, data.get("did")


def _save_identity(path: str, keypair: crypto.KeyPair, did: str | None = None) -> None:
    data = {
        "algorithm": keypair.algorithm,
        "public_key": b64encode(keypair.public_key),
        "private_key": b64encode(keypair.private_key),
    }
    if did:
        data["did"] = did
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def _vdr_client(vdr: str | None) -> HttpVdrClient:
    endpoint = vdr or os.environ.get("POLARIS_VDR_ENDPOINT")
    if not endpoint:
        raise _fail("no registry endpoint; pass --vdr or set POLARIS_VDR_ENDPOINT")
    return HttpVdrClient(endpoint)


def _rs_tunnel(rs: str | None, identity_path: str) -> SessionTunnel:
    import httpx

    endpoint = rs or os.environ.get("POLARIS_RS_ENDPOINT")
    if not endpoint:
        raise _fail("no resource server endpoint; pass --rs or set POLARIS_RS_ENDPOINT")
    keypair, did = _load_identity(identity_path)
    if not did:
        raise _fail(f"identity file {identity_path} has no DID; run `polaris register`")
    info = httpx.get(f"{endpoint}/info", timeout=10.0).json()
    vdr = _vdr_client(None)
    peer_doc = vdr.resolve(info["did"])
    return SessionTunnel(
        self_did=did,
        keypair=keypair,
        peer_did=info["did"],
        peer_public_key=peer_doc.public_key,
        transport=http_envelope_transport(endpoint),
    )


@click.group()
def main():
    """Decentralized access control toolkit."""


# ----------------------------------------------------------------------
# Identity
# ----------------------------------------------------------------------


@main.command()
@click.option("--out", required=True, type=click.Path(), help="identity file to write")
def keygen(out):
    """Generate a fresh identity keypair."""
    _save_identity(out, crypto.generate_keypair())
    click.echo(f"wrote {out}")


@main.command()
@click.option("--key", "key_path", required=True, type=click.Path(exists=True))
@click.option("--uuid", "uuid_hint", required=True)
@click.option("--vdr", default=None, help="registry endpoint URL")
def register(key_path, uuid_hint, vdr):
    """Register an identity file's public key, storing the minted DID."""
    keypair, _ = _load_identity(key_path)
    client = _vdr_client(vdr)
    did = client.register(keypair.public_key, keypair.algorithm, uuid_hint)
    _save_identity(key_path, keypair, did)
    click.echo(did)


# ----------------------------------------------------------------------
# Services
# ----------------------------------------------------------------------


@main.group()
def vdr():
    """Registry service."""


@vdr.command("serve")
@click.option("--addr", default=None, help="listen address host:port")
@click.option("--store", "store_kind",
              type=click.Choice(["memory", "file"]), default=None)
@click.option("--journal", type=click.Path(), default="vdr-journal.jsonl")
def vdr_serve(addr, store_kind, journal):
    """Run the registry service."""
    import uvicorn

    addr = addr or os.environ.get("POLARIS_VDR_ADDR", DEFAULT_VDR_ADDR)
    store_kind = store_kind or os.environ.get("POLARIS_VDR_STORE", "memory")
    store = FileJournalDidStore(journal) if store_kind == "file" else InMemoryDidStore()
    app = create_vdr_app(DidRegistry(store=store))
    host, port = _split_addr(addr)
    click.echo(f"registry listening on {host}:{port} (store={store_kind})")
    uvicorn.run(app, host=host, port=port, log_level="warning")


def _service_identity(registry_client, label: str) -> ServiceIdentity:
    keys = crypto.generate_keypair()
    did = registry_client.register(keys.public_key, keys.algorithm, label)
    return ServiceIdentity(did=did, keypair=keys)


@main.group()
def rs():
    """Resource server."""


@rs.command("serve")
@click.option("--addr", default=None, help="listen address host:port")
@click.option("--vdr", "vdr_endpoint", default=None, help="registry endpoint URL")
@click.option("--as-endpoint", default=None,
              help="remote authorization server; defaults to in-process")
@click.option("--require-signed-policies", is_flag=True, default=False)
@click.option("--grant-ttl", type=float, default=300.0, show_default=True)
@click.option("--content-dir", type=click.Path(), default=None,
              help="file-backed content store; defaults to in-memory")
def rs_serve(addr, vdr_endpoint, as_endpoint, require_signed_policies, grant_ttl,
             content_dir):
    """Run the resource server (directory, policies, grants)."""
    import uvicorn

    addr = addr or os.environ.get("POLARIS_RS_ADDR", DEFAULT_RS_ADDR)
    registry = _vdr_client(vdr_endpoint)
    as_endpoint = as_endpoint or os.environ.get("POLARIS_AS_ENDPOINT")
    if as_endpoint:
        authz = HttpAuthzClient(as_endpoint)
    else:
        authz = LocalAuthzClient(AuthorizationService(registry))
    service = ResourceService(
        registry=registry,
        authz=authz,
        content_store=FileContentStore(content_dir) if content_dir else None,
        require_signed_policies=require_signed_policies,
        grant_ttl=grant_ttl,
    )
    identity = _service_identity(registry, "resource-server")
    app = create_resource_app(service, identity, registry)
    host, port = _split_addr(addr)
    click.echo(f"resource server {identity.did} listening on {host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.group(name="as")
def authz_group():
    """Authorization server."""


@authz_group.command("serve")
@click.option("--addr", default=None, help="listen address host:port")
@click.option("--vdr", "vdr_endpoint", default=None, help="registry endpoint URL")
def as_serve(addr, vdr_endpoint):
    """Run the authorization server (policy decision + enforcement)."""
    import uvicorn

    addr = addr or os.environ.get("POLARIS_AS_ADDR", DEFAULT_AS_ADDR)
    registry = _vdr_client(vdr_endpoint)
    service = AuthorizationService(registry)
    identity = _service_identity(registry, "authorization-server")
    app = create_authz_app(service, identity, registry)
    host, port = _split_addr(addr)
    click.echo(f"authorization server {identity.did} listening on {host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


# ----------------------------------------------------------------------
# Credential flow
# ----------------------------------------------------------------------


@main.command()
@click.option("--issuer", "issuer_path", required=True, type=click.Path(exists=True))
@click.option("--holder", "holder_path", required=True, type=click.Path(exists=True))
@click.option("--claims", "claims_path", required=True, type=click.Path(exists=True),
              help="JSON object of attribute name -> value")
@click.option("--schema", default="generic", show_default=True)
@click.option("--validity-days", type=int, default=365, show_default=True)
@click.option("--wallet", "wallet_dir", required=True, type=click.Path())
@click.option("--vdr", default=None, help="registry endpoint URL")
def issue(issuer_path, holder_path, claims_path, schema, validity_days, wallet_dir, vdr):
    """Issue a credential to a holder (both identities held locally)."""
    issuer_keys, issuer_did = _load_identity(issuer_path)
    holder_keys, holder_did = _load_identity(holder_path)
    if not issuer_did or not holder_did:
        raise _fail("both identity files need DIDs; run `polaris register` first")
    claims = json.loads(Path(claims_path).read_text())
    registry = _vdr_client(vdr)
    issuer = Issuer(issuer_did, issuer_keys, registry)
    challenge = issuer.create_challenge(holder_did)
    response = answer_challenge(challenge, holder_keys.private_key)
    try:
        vc, salts = issuer.issue(
            response,
            [AttributeClaim(n, str(v)) for n, v in sorted(claims.items())],
            schema=schema,
            validity=timedelta(days=validity_days),
        )
    except PolarisError as exc:
        raise _fail(str(exc))
    wallet = Wallet(Path(wallet_dir))
    wallet.add(vc, salts, {n: str(v) for n, v in claims.items()})
    click.echo(vc.metadata.credential_id)


@main.command()
@click.option("--wallet", "wallet_dir", required=True, type=click.Path(exists=True))
@click.option("--holder", "holder_path", required=True, type=click.Path(exists=True))
@click.option("--select", "selections", multiple=True, required=True,
              help="credential_id:attr1,attr2 (repeatable)")
@click.option("--audience", required=True, help="verifier DID")
@click.option("--out", required=True, type=click.Path())
def present(wallet_dir, holder_path, selections, audience, out):
    """Build a signed selective-disclosure presentation."""
    holder_keys, holder_did = _load_identity(holder_path)
    if not holder_did:
        raise _fail("holder identity has no DID")
    wallet = Wallet(Path(wallet_dir))
    parsed = []
    for spec in selections:
        credential_id, _, names = spec.partition(":")
        attribute_names = tuple(n for n in names.split(",") if n)
        parsed.append(DisclosureSelection(credential_id, attribute_names))
    try:
        message = build_presentation(
            wallet, parsed, audience, holder_did, holder_keys.private_key
        )
    except PolarisError as exc:
        raise _fail(str(exc))
    Path(out).write_bytes(message.to_json())
    click.echo(f"wrote {out}")


# ----------------------------------------------------------------------
# Policy tooling
# ----------------------------------------------------------------------


@main.group()
def policy():
    """Policy tooling: lint, sign, eval."""


@policy.command("lint")
@click.argument("policy_file", type=click.Path(exists=True))
def policy_lint(policy_file):
    """Validate a policy document."""
    try:
        parsed = parse_policy(Path(policy_file).read_bytes())
    except PolarisError as exc:
        raise _fail(str(exc))
    click.echo(f"ok: {parsed.policy_id} ({len(parsed.rules)} rules, {parsed.combining})")


@policy.command("sign")
@click.option("--policy", "policy_file", required=True, type=click.Path(exists=True))
@click.option("--owner", "owner_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def policy_sign(policy_file, owner_path, out):
    """Sign a policy with the owner identity."""
    owner_keys, owner_did = _load_identity(owner_path)
    if not owner_did:
        raise _fail("owner identity has no DID")
    try:
        parsed = parse_policy(Path(policy_file).read_bytes())
        signed = sign_policy(parsed, owner_did, owner_keys.private_key)
    except PolarisError as exc:
        raise _fail(str(exc))
    Path(out).write_bytes(serialize_policy(signed))
    click.echo(f"wrote {out}")


@policy.command("eval")
@click.option("--policy", "policy_file", required=True, type=click.Path(exists=True))
@click.option("--attrs", "attrs_file", required=True, type=click.Path(exists=True),
              help="JSON list of {issuer_did, name, value}")
@click.option("--trace", is_flag=True, default=False)
def policy_eval(policy_file, attrs_file, trace):
    """Evaluate a policy against verified attribute triples."""
    try:
        parsed = parse_policy(Path(policy_file).read_bytes())
        raw = json.loads(Path(attrs_file).read_text())
        attrs = VerifiedAttributes(
            triples=[VerifiedTriple(a["issuer_did"], a["name"], a["value"]) for a in raw]
        )
    except (PolarisError, KeyError, ValueError) as exc:
        raise _fail(str(exc))
    decision: Decision = evaluate_policy(parsed, attrs)
    if trace:
        click.echo(json.dumps(decision.to_dict(), indent=2))
    else:
        click.echo(decision.outcome)
    sys.exit(0 if decision.outcome == "Permit" else 2)


# ----------------------------------------------------------------------
# Resource flow
# ----------------------------------------------------------------------


@main.group()
def resource():
    """Resource upload and access against a running resource server."""


@resource.command("upload")
@click.option("--owner", "owner_path", required=True, type=click.Path(exists=True))
@click.option("--content", "content_file", required=True, type=click.Path(exists=True))
@click.option("--description", default="")
@click.option("--policy", "policy_file", required=True, type=click.Path(exists=True))
@click.option("--rs", default=None, help="resource server endpoint URL")
def resource_upload(owner_path, content_file, description, policy_file, rs):
    """Upload content plus its access policy."""
    tunnel = _rs_tunnel(rs, owner_path)
    _, owner_did = _load_identity(owner_path)
    parsed = parse_policy(Path(policy_file).read_bytes())
    status, body = tunnel.request_json(
        "POST",
        "/resource",
        payload={
            "owner_did": owner_did,
            "content": b64encode(Path(content_file).read_bytes()),
            "description": description,
            "policy": parsed.to_dict(),
        },
    )
    if status != 200:
        raise _fail(f"upload rejected ({status}): {body}")
    click.echo(body["resource_id"])


@resource.command("access")
@click.option("--resource", "resource_id", required=True)
@click.option("--presentation", "presentation_file", required=True,
              type=click.Path(exists=True))
@click.option("--identity", "identity_path", required=True, type=click.Path(exists=True))
@click.option("--rs", default=None, help="resource server endpoint URL")
def resource_access(resource_id, presentation_file, identity_path, rs):
    """Submit a presentation; prints the grant or the denial trace."""
    tunnel = _rs_tunnel(rs, identity_path)
    message = SignedPresentation.from_dict(
        json.loads(Path(presentation_file).read_text())
    )
    status, body = tunnel.request_json(
        "POST",
        f"/resource/{resource_id}/access",
        payload={"signed_presentation": message.to_dict()},
    )
    click.echo(json.dumps(body, indent=2))
    if status != 200 or not body.get("granted"):
        sys.exit(2)


@resource.command("fetch")
@click.option("--resource", "resource_id", required=True)
@click.option("--token", required=True)
@click.option("--identity", "identity_path", required=True, type=click.Path(exists=True))
@click.option("--rs", default=None, help="resource server endpoint URL")
@click.option("--out", type=click.Path(), default=None)
def resource_fetch(resource_id, token, identity_path, rs, out):
    """Redeem a grant token for the resource bytes."""
    tunnel = _rs_tunnel(rs, identity_path)
    status, raw = tunnel.request(
        "GET", f"/resource/{resource_id}/content", query={"token": token}
    )
    if status != 200:
        raise _fail(f"fetch rejected ({status}): {raw[:200]!r}")
    if out:
        Path(out).write_bytes(raw)
        click.echo(f"wrote {len(raw)} bytes to {out}")
    else:
        sys.stdout.buffer.write(raw)


# ----------------------------------------------------------------------
# Demo and benchmarks
# ----------------------------------------------------------------------


@main.command()
@click.option("--scenario", default="qualified", show_default=True,
              type=click.Choice(list(demo_mod.SCENARIOS) + ["all"]))
def demo(scenario):
    """Run the scripted end-to-end flow with in-process services."""
    if scenario == "all":
        results = demo_mod.run_all_scenarios(printer=click.echo)
        expected = {
            "qualified": demo_mod.EXIT_GRANTED,
            "under-qualified": demo_mod.EXIT_DENIED,
            "tampered": demo_mod.EXIT_AUTH_FAILURE,
            "replay": demo_mod.EXIT_REPLAY_REJECTED,
        }
        ok = all(results[name].exit_code == code for name, code in expected.items())
        for name, result in results.items():
            click.echo(f"{name}: exit {result.exit_code}")
        sys.exit(0 if ok else 1)
    result = demo_mod.run_demo(scenario, printer=click.echo)
    sys.exit(result.exit_code)


@main.group(name="bench")
def bench_group():
    """Benchmark harness."""


def _emit_report(report_dict: dict, out: str | None) -> None:
    rendered = json.dumps(report_dict, indent=2)
    if out:
        Path(out).write_text(rendered + "\n")
        click.echo(f"wrote {out}")
    else:
        click.echo(rendered)


@bench_group.command("kd")
@click.option("--size", type=int, default=1024 * 1024, show_default=True,
              help="payload bytes per message")
@click.option("--rounds", type=float, default=5.0, show_default=True,
              help="exchange rounds (0.5 = one-way message)")
@click.option("--mode", type=click.Choice(list(bench_mod.MODES)),
              default=bench_mod.MODE_KD, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="write report JSON here")
def bench_kd_cmd(size, rounds, mode, out):
    """Compare session-key vs per-message PKI exchange cost."""
    report = bench_mod.bench_kd(size, rounds, mode)
    _emit_report(report.to_dict(), out)


@bench_group.command("load")
@click.option("--op", type=click.Choice(list(bench_mod.LOAD_OPS)), default="resolve",
              show_default=True)
@click.option("--rate", type=float, default=200.0, show_default=True,
              help="target requests/second")
@click.option("--duration", type=float, default=3.0, show_default=True,
              help="seconds of load")
@click.option("--out", type=click.Path(), default=None, help="write report JSON here")
def bench_load_cmd(op, rate, duration, out):
    """Open-loop load against the in-process registry service."""
    report = bench_mod.bench_load(op, rate, duration)
    click.echo("reference baseline (blockchain-backed deployment, context only):")
    for name, value in bench_mod.REFERENCE_BASELINE_MS.items():
        click.echo(f"  {name}: {value} ms")
    _emit_report(report.to_dict(), out)


if __name__ == "__main__":
    main()
