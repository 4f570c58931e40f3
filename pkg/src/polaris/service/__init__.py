from .authz_app import create_authz_app
from .common import ServiceIdentity
from .resource_app import create_resource_app
from .vdr_app import create_vdr_app

__all__ = [
    "ServiceIdentity",
    "create_authz_app",
    "create_resource_app",
    "create_vdr_app",
]
