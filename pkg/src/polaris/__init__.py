"""Desk-scale decentralized access control.

Core pieces: identity registry (``vdr``), cryptographic primitives
(``crypto``), credential issuance with salted-commitment claims
(``issuance``), selective-disclosure presentations (``presentation``),
the policy language and engine (``vppl``), session envelopes
(``session``), and the resource/authorization services (``access``).
FastAPI wire layers live under ``polaris.service``; the CLI in
``polaris.cli`` is a thin client over those services.
"""

__version__ = "0.1.0"
