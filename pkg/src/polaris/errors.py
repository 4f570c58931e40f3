"""Exception hierarchy shared by all polaris components.

Verification routines distinguish a *false verdict* (well-formed input that
fails a check) from an *error* (malformed input, unreachable dependency).
Only the latter raise; verdicts are returned.
"""


class PolarisError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(PolarisError):
    """Malformed or out-of-contract input (bad key bytes, bad DID syntax...)."""


class InvalidDid(InvalidInput):
    """DID string does not parse or uses an unsupported method."""


class NotFound(PolarisError):
    """Lookup of a registered object (DID, resource, credential) failed."""


class TransportError(PolarisError):
    """A remote service could not be reached or returned garbage.

    Deliberately distinct from NotFound and from false verdicts so callers
    can retry instead of treating the failure as a rejection.
    """


class DecryptionError(PolarisError):
    """Authenticated decryption failed: wrong key or tampered ciphertext."""


class SealedPayloadTooLarge(InvalidInput):
    """Payload exceeds the asymmetric transport limit."""


class PresentationError(PolarisError):
    """Base class for presentation verification failures."""


class HolderSignatureInvalid(PresentationError):
    """The holder signature over the presentation does not verify."""


class CredentialInvalid(PresentationError):
    """An embedded credential failed issuer verification or expired."""


class CommitmentMismatch(PresentationError):
    """A disclosed (name, value, salt) does not match the committed digest."""


class DisclosureInvalid(PresentationError):
    """Disclosed names and salts are inconsistent with the credential."""


class PolicyError(PolarisError):
    """Base class for policy parsing/validation failures."""


class PolicySyntaxError(PolicyError):
    """Policy document is not valid JSON; carries the reported position."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(message)
        self.line = line
        self.column = column


class PolicySchemaError(PolicyError):
    """Policy JSON violates the schema; carries the offending field path."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class SessionError(PolarisError):
    """Base class for secure-session failures."""


class UnknownSession(SessionError):
    """Envelope references a session id that is not installed."""


class ReplayedCounter(SessionError):
    """Envelope counter does not exceed the last accepted counter."""


class SessionExpired(SessionError):
    """Session TTL elapsed; the context refuses all operations."""


class AccessError(PolarisError):
    """Base class for access-flow failures at the resource server."""


class AuthenticationFailure(AccessError):
    """Presentation failed cryptographic verification; never reaches the PDP."""


class ReplayedPresentation(AccessError):
    """The presentation nonce was already consumed."""


class PolicyIntegrityError(AccessError):
    """Stored policy signature did not verify; distinct from a clean Deny."""


class GrantInvalid(AccessError):
    """Unknown, expired, or out-of-scope access grant token."""
