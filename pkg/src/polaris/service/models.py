"""Pydantic request/response models for the wire APIs.

These mirror the canonical JSON formats of the core dataclasses; the
service layer converts at the boundary and the core never sees pydantic.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class RegisterDidRequest(BaseModel):
    public_key: str = Field(description="base64 key blob")
    algorithm: str
    uuid: str


class RegisterDidResponse(BaseModel):
    did: str


class DidDocumentModel(BaseModel):
    did: str
    public_key: str
    algorithm: str
    created_at: str
    uuid: str


class ErrorResponse(BaseModel):
    error: str
    detail: str = ""


class ServiceInfo(BaseModel):
    role: str
    did: str


class UploadResourceRequest(BaseModel):
    owner_did: str
    content: str = Field(description="base64 resource bytes")
    description: str = ""
    policy: dict


class ResourceRecordModel(BaseModel):
    resource_id: str
    owner_did: str
    address: str
    description: str
    created_at: str


class AccessRequestBody(BaseModel):
    signed_presentation: dict


class AccessResponse(BaseModel):
    granted: bool
    grant: Optional[dict] = None
    denial: Optional[dict] = None


class EvaluateRequest(BaseModel):
    policy: dict
    attributes: list[dict]


class EvaluateResponse(BaseModel):
    decision: dict
    signature_status: str
