"""FastAPI app exposing the registry wire API."""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response

from ..encoding import b64decode, canonical_json
from ..errors import InvalidDid, InvalidInput, NotFound
from ..vdr import DidRegistry
from .models import DidDocumentModel, RegisterDidRequest, RegisterDidResponse


def create_vdr_app(registry: DidRegistry) -> FastAPI:
    app = FastAPI(title="polaris-vdr", docs_url=None, redoc_url=None)

    # Documents are immutable once registered, so their canonical JSON can
    # be cached and served byte-identically on every resolve.
    serialized: dict[str, bytes] = {}

    @app.post("/did/register", response_model=RegisterDidResponse)
    async def register(request: RegisterDidRequest):
        try:
            public_key = b64decode(request.public_key, what="public_key")
            did = registry.register(public_key, request.algorithm, request.uuid)
        except InvalidInput as exc:
            return JSONResponse(
                status_code=400, content={"error": "invalid-input", "detail": str(exc)}
            )
        return RegisterDidResponse(did=did)

    @app.get("/did/resolve/{did}", response_model=DidDocumentModel)
    async def resolve(did: str):
        body = serialized.get(did)
        if body is None:
            try:
                document = registry.resolve(did)
            except InvalidDid as exc:
                return JSONResponse(
                    status_code=400,
                    content={"error": "invalid-input", "detail": str(exc)},
                )
            except NotFound as exc:
                return JSONResponse(
                    status_code=404, content={"error": "not-found", "detail": str(exc)}
                )
            body = canonical_json(document.to_dict())
            serialized[did] = body
        return Response(content=body, media_type="application/json")

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    return app
