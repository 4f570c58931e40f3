"""FastAPI app for the resource server.

Every operation is reachable two ways: as a plain JSON endpoint and
through the session-envelope tunnel at ``POST /session/envelope``.  Both
paths funnel into the same handlers, which work on raw bytes so the
tunnel's inner frames and HTTP bodies stay byte-identical.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from ..access import AccessGrant, ResourceService
from ..encoding import b64decode, canonical_json
from ..errors import InvalidInput, PolarisError
from ..presentation import SignedPresentation
from ..vdr import VdrClient
from .common import ServiceIdentity, http_status_for
from .gateway import EnvelopeGateway, error_payload
from .models import (
    AccessRequestBody,
    AccessResponse,
    ResourceRecordModel,
    ServiceInfo,
    UploadResourceRequest,
)


def _json_bytes(data: dict) -> bytes:
    return canonical_json(data)


class _Handlers:
    """Transport-independent request handlers returning (status, bytes)."""

    def __init__(self, service: ResourceService):
        self.service = service

    def _guard(self, fn, *args):
        try:
            return fn(*args)
        except PolarisError as exc:
            return http_status_for(exc), _json_bytes(error_payload(exc))

    def upload(self, body: bytes) -> tuple[int, bytes]:
        def run(body: bytes):
            try:
                data = json.loads(body.decode("utf-8"))
            except (ValueError, UnicodeDecodeError) as exc:
                raise InvalidInput(f"upload body is not JSON: {exc}") from exc
            for key in ("owner_did", "content", "policy"):
                if key not in data:
                    raise InvalidInput(f"upload body missing {key!r}")
            record = self.service.upload_resource(
                owner_did=data["owner_did"],
                content=b64decode(data["content"], what="content"),
                description=data.get("description", ""),
                policy=canonical_json(data["policy"]),
            )
            return 200, _json_bytes(record.to_dict())

        return self._guard(run, body)

    def get_record(self, resource_id: str) -> tuple[int, bytes]:
        def run(resource_id: str):
            record = self.service.get_record(resource_id)
            return 200, _json_bytes(record.to_dict())

        return self._guard(run, resource_id)

    def get_policy(self, resource_id: str) -> tuple[int, bytes]:
        def run(resource_id: str):
            return 200, self.service.get_policy_bytes(resource_id)

        return self._guard(run, resource_id)

    def access(self, resource_id: str, body: bytes) -> tuple[int, bytes]:
        def run(resource_id: str, body: bytes):
            try:
                data = json.loads(body.decode("utf-8"))
                presentation = SignedPresentation.from_dict(data["signed_presentation"])
            except (ValueError, KeyError, UnicodeDecodeError) as exc:
                raise InvalidInput(f"malformed access request: {exc}") from exc
            outcome = self.service.request_access(presentation, resource_id)
            if isinstance(outcome, AccessGrant):
                return 200, _json_bytes({"granted": True, "grant": outcome.to_dict()})
            return 200, _json_bytes({"granted": False, "denial": outcome.to_dict()})

        return self._guard(run, resource_id, body)

    def content(self, resource_id: str, token: str) -> tuple[int, bytes]:
        def run(resource_id: str, token: str):
            return 200, self.service.fetch_resource(token, resource_id)

        return self._guard(run, resource_id, token)

    def dispatch(self, method: str, path: str, query: dict, body: bytes) -> tuple[int, bytes]:
        """Route one tunneled inner request."""
        parts = [p for p in path.split("/") if p]
        if method == "POST" and parts == ["resource"]:
            return self.upload(body)
        if len(parts) >= 2 and parts[0] == "resource":
            resource_id = parts[1]
            tail = parts[2:]
            if method == "GET" and not tail:
                return self.get_record(resource_id)
            if method == "GET" and tail == ["policy"]:
                return self.get_policy(resource_id)
            if method == "POST" and tail == ["access"]:
                return self.access(resource_id, body)
            if method == "GET" and tail == ["content"]:
                token = query.get("token", "")
                return self.content(resource_id, token)
        return 404, _json_bytes({"error": "not-found", "detail": f"{method} {path}"})


def create_resource_app(
    service: ResourceService,
    identity: ServiceIdentity,
    registry: VdrClient,
) -> FastAPI:
    app = FastAPI(title="polaris-resource-server", docs_url=None, redoc_url=None)
    handlers = _Handlers(service)
    gateway = EnvelopeGateway(
        did=identity.did,
        keypair=identity.keypair,
        dispatch=handlers.dispatch,
        registry=registry,
        clock=service._clock,
    )
    app.state.gateway = gateway
    app.state.service = service

    def _reply(status: int, body: bytes, media_type: str = "application/json") -> Response:
        return Response(content=body, status_code=status, media_type=media_type)

    @app.get("/info", response_model=ServiceInfo)
    async def info():
        return ServiceInfo(role="resource-server", did=identity.did)

    @app.post("/resource", response_model=ResourceRecordModel)
    async def upload(request: UploadResourceRequest):
        status, body = handlers.upload(canonical_json(request.model_dump()))
        return _reply(status, body)

    @app.get("/resource/{resource_id}", response_model=ResourceRecordModel)
    async def get_record(resource_id: str):
        status, body = handlers.get_record(resource_id)
        return _reply(status, body)

    @app.get("/resource/{resource_id}/policy")
    async def get_policy(resource_id: str):
        status, body = handlers.get_policy(resource_id)
        return _reply(status, body)

    @app.post("/resource/{resource_id}/access", response_model=AccessResponse)
    async def request_access(resource_id: str, body: AccessRequestBody):
        status, payload = handlers.access(resource_id, canonical_json(body.model_dump()))
        return _reply(status, payload)

    @app.get("/resource/{resource_id}/content")
    async def fetch_content(resource_id: str, token: str = ""):
        status, body = handlers.content(resource_id, token)
        media = "application/octet-stream" if status == 200 else "application/json"
        return _reply(status, body, media_type=media)

    @app.post("/session/envelope")
    async def session_envelope(request: Request):
        raw = await request.body()
        try:
            reply = gateway.handle(raw)
        except PolarisError as exc:
            return JSONResponse(status_code=http_status_for(exc), content=error_payload(exc))
        return Response(content=reply, media_type="application/json")

    return app
