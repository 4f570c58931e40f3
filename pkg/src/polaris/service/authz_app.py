"""FastAPI app for the authorization server (decision + enforcement)."""

from __future__ import annotations

import json

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from ..access import AuthorizationService
from ..encoding import canonical_json
from ..errors import InvalidInput, PolarisError, PolicyIntegrityError
from ..presentation import VerifiedAttributes, VerifiedTriple
from ..vdr import VdrClient
from ..vppl import parse_policy
from .common import ServiceIdentity, http_status_for
from .gateway import EnvelopeGateway, error_payload
from .models import EvaluateRequest, EvaluateResponse, ServiceInfo


def _attrs_from_dicts(items: list[dict]) -> VerifiedAttributes:
    triples = []
    for item in items:
        try:
            triples.append(
                VerifiedTriple(
                    issuer_did=item["issuer_did"],
                    name=item["name"],
                    value=item["value"],
                )
            )
        except KeyError as exc:
            raise InvalidInput(f"attribute missing field {exc}") from exc
    return VerifiedAttributes(triples=triples)


def _evaluate_handler(service: AuthorizationService, body: bytes) -> tuple[int, bytes]:
    try:
        try:
            data = json.loads(body.decode("utf-8"))
            policy = parse_policy(canonical_json(data["policy"]))
            attrs = _attrs_from_dicts(data.get("attributes", []))
        except (ValueError, KeyError, UnicodeDecodeError) as exc:
            raise InvalidInput(f"malformed evaluate request: {exc}") from exc
        decision, signature_status = service.evaluate(policy, attrs)
    except PolicyIntegrityError as exc:
        return 422, canonical_json(error_payload(exc))
    except PolarisError as exc:
        return http_status_for(exc), canonical_json(error_payload(exc))
    return 200, canonical_json(
        {"decision": decision.to_dict(), "signature_status": signature_status}
    )


def create_authz_app(
    service: AuthorizationService,
    identity: ServiceIdentity,
    registry: VdrClient,
) -> FastAPI:
    app = FastAPI(title="polaris-authorization-server", docs_url=None, redoc_url=None)

    def dispatch(method: str, path: str, query: dict, body: bytes) -> tuple[int, bytes]:
        if method == "POST" and path.rstrip("/") == "/evaluate":
            return _evaluate_handler(service, body)
        return 404, canonical_json({"error": "not-found", "detail": f"{method} {path}"})

    gateway = EnvelopeGateway(
        did=identity.did,
        keypair=identity.keypair,
        dispatch=dispatch,
        registry=registry,
    )
    app.state.gateway = gateway
    app.state.service = service

    @app.get("/info", response_model=ServiceInfo)
    async def info():
        return ServiceInfo(role="authorization-server", did=identity.did)

    @app.post("/evaluate", response_model=EvaluateResponse)
    async def evaluate(request: EvaluateRequest):
        status, body = _evaluate_handler(service, canonical_json(request.model_dump()))
        return Response(content=body, status_code=status, media_type="application/json")

    @app.post("/session/envelope")
    async def session_envelope(request: Request):
        raw = await request.body()
        try:
            reply = gateway.handle(raw)
        except PolarisError as exc:
            return JSONResponse(status_code=http_status_for(exc), content=error_payload(exc))
        return Response(content=reply, media_type="application/json")

    return app
