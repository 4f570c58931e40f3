"""CLI surface: local commands via the click runner, plus one live-socket
flow against real services."""

import json
import socket
import threading
import time

import pytest
from click.testing import CliRunner

from polaris.cli import main
from polaris.encoding import canonical_json

POLICY = {
    "policy_id": "cli-test",
    "combining": "permit-overrides",
    "rules": [
        {
            "decision": "permit",
            "issuers": [],
            "conditions": [
                {"attr": "claims.degree", "fn": "==", "value": "PhD", "type": "string"}
            ],
        }
    ],
}

ATTRS = [
    {"issuer_did": "did:polaris:aaaaaaaa-0000-4000-8000-000000000001",
     "name": "degree", "value": "PhD"}
]


@pytest.fixture
def runner():
    return CliRunner()


def test_keygen_writes_identity(runner, tmp_path):
    out = tmp_path / "id.json"
    result = runner.invoke(main, ["keygen", "--out", str(out)])
    assert result.exit_code == 0, result.output
    data = json.loads(out.read_text())
    assert set(data) >= {"algorithm", "public_key", "private_key"}


def test_policy_lint_ok(runner, tmp_path):
    policy_file = tmp_path / "p.json"
    policy_file.write_bytes(canonical_json(POLICY))
    result = runner.invoke(main, ["policy", "lint", str(policy_file)])
    assert result.exit_code == 0
    assert "cli-test" in result.output


def test_policy_lint_rejects_bad_policy(runner, tmp_path):
    policy_file = tmp_path / "p.json"
    policy_file.write_text('{"policy_id": "x"}')
    result = runner.invoke(main, ["policy", "lint", str(policy_file)])
    assert result.exit_code == 1


def test_policy_eval_permit_and_trace(runner, tmp_path):
    policy_file = tmp_path / "p.json"
    policy_file.write_bytes(canonical_json(POLICY))
    attrs_file = tmp_path / "attrs.json"
    attrs_file.write_text(json.dumps(ATTRS))
    result = runner.invoke(
        main, ["policy", "eval", "--policy", str(policy_file),
               "--attrs", str(attrs_file)]
    )
    assert result.exit_code == 0
    assert "Permit" in result.output

    traced = runner.invoke(
        main, ["policy", "eval", "--policy", str(policy_file),
               "--attrs", str(attrs_file), "--trace"]
    )
    assert "matched_bindings" in traced.output


def test_policy_eval_deny_exit_code(runner, tmp_path):
    policy_file = tmp_path / "p.json"
    policy_file.write_bytes(canonical_json(POLICY))
    attrs_file = tmp_path / "attrs.json"
    attrs_file.write_text(json.dumps([]))
    result = runner.invoke(
        main, ["policy", "eval", "--policy", str(policy_file),
               "--attrs", str(attrs_file)]
    )
    assert result.exit_code == 2
    assert "NotApplicable" in result.output


def test_policy_sign_requires_registered_owner_file(runner, tmp_path):
    policy_file = tmp_path / "p.json"
    policy_file.write_bytes(canonical_json(POLICY))
    owner_file = tmp_path / "owner.json"
    runner.invoke(main, ["keygen", "--out", str(owner_file)])
    result = runner.invoke(
        main, ["policy", "sign", "--policy", str(policy_file),
               "--owner", str(owner_file), "--out", str(tmp_path / "signed.json")]
    )
    assert result.exit_code == 1  # no DID in the identity file yet


def test_bench_kd_cli_writes_report(runner, tmp_path):
    out = tmp_path / "report.json"
    result = runner.invoke(
        main, ["bench", "kd", "--size", "512", "--rounds", "1",
               "--mode", "kd-session", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())
    assert report["asym_ops"] == 2


def test_bench_load_cli_reports(runner, tmp_path):
    out = tmp_path / "load.json"
    result = runner.invoke(
        main, ["bench", "load", "--op", "resolve", "--rate", "50",
               "--duration", "0.3", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    assert "reference baseline" in result.output
    report = json.loads(out.read_text())
    assert report["success_rate"] == 1.0


def test_demo_cli_exit_codes(runner):
    assert runner.invoke(main, ["demo", "--scenario", "qualified"]).exit_code == 0
    assert runner.invoke(main, ["demo", "--scenario", "under-qualified"]).exit_code == 2


# ----------------------------------------------------------------------
# Live socket flow
# ----------------------------------------------------------------------


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def live_vdr():
    import uvicorn

    from polaris.service.vdr_app import create_vdr_app
    from polaris.vdr import DidRegistry

    port = _free_port()
    config = uvicorn.Config(
        create_vdr_app(DidRegistry()), host="127.0.0.1", port=port,
        log_level="error",
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("registry service did not start")
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def test_register_and_issue_over_sockets(runner, tmp_path, live_vdr):
    issuer_file = tmp_path / "issuer.json"
    holder_file = tmp_path / "holder.json"
    runner.invoke(main, ["keygen", "--out", str(issuer_file)])
    runner.invoke(main, ["keygen", "--out", str(holder_file)])

    for path, uuid_hint in ((issuer_file, "iss"), (holder_file, "hol")):
        result = runner.invoke(
            main, ["register", "--key", str(path), "--uuid", uuid_hint,
                   "--vdr", live_vdr]
        )
        assert result.exit_code == 0, result.output
        assert result.output.strip().startswith("did:polaris:")
        assert json.loads(path.read_text())["did"]

    claims_file = tmp_path / "claims.json"
    claims_file.write_text(json.dumps({"degree": "PhD", "age": "25"}))
    wallet_dir = tmp_path / "wallet"
    result = runner.invoke(
        main,
        ["issue", "--issuer", str(issuer_file), "--holder", str(holder_file),
         "--claims", str(claims_file), "--wallet", str(wallet_dir),
         "--vdr", live_vdr],
    )
    assert result.exit_code == 0, result.output
    credential_id = result.output.strip()
    assert (wallet_dir / credential_id / "credential.json").exists()
    assert (wallet_dir / credential_id / "salts.json").exists()

    holder_did = json.loads(holder_file.read_text())["did"]
    vp_file = tmp_path / "vp.json"
    result = runner.invoke(
        main,
        ["present", "--wallet", str(wallet_dir), "--holder", str(holder_file),
         "--select", f"{credential_id}:degree", "--audience", holder_did,
         "--out", str(vp_file)],
    )
    assert result.exit_code == 0, result.output
    presentation = json.loads(vp_file.read_text())
    assert presentation["entries"][0]["disclosed"] == [
        {"name": "degree", "value": "PhD"}
    ]
    assert "age" not in json.dumps(presentation["entries"][0]["disclosed"])
