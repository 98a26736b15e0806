"""Exception hierarchy shared across the platform."""


class ImobeError(Exception):
    """Base class for all platform errors."""

    code = "Error"

    def __init__(self, reason=""):
        super().__init__(reason or self.code)
        self.reason = reason or self.code


# --- domain ---

class DomainError(ImobeError):
    code = "DomainError"


class MismatchedItem(DomainError):
    code = "MismatchedItem"


class NoMappedItems(DomainError):
    code = "NoMappedItems"


class EmptyCohort(DomainError):
    code = "EmptyCohort"


class UnknownOutcome(DomainError):
    code = "UnknownOutcome"


class ValidationFailure(DomainError):
    code = "ValidationFailure"


# --- authentication / authorization ---

class AuthError(ImobeError):
    code = "AuthError"


class InvalidCredentials(AuthError):
    code = "InvalidCredentials"


class ExpiredCredentials(AuthError):
    code = "ExpiredCredentials"


class UnknownPrincipal(AuthError):
    code = "UnknownPrincipal"


class AccountDisabled(InvalidCredentials):
    code = "AccountDisabled"


class Unauthorized(AuthError):
    code = "Unauthorized"


class ScopeForbidden(AuthError):
    code = "ScopeForbidden"


class DuplicatePrincipal(ImobeError):
    code = "DuplicatePrincipal"


# --- runtime ---

class RuntimeFault(ImobeError):
    code = "RuntimeFault"


class DuplicateAgentId(RuntimeFault):
    code = "DuplicateAgentId"


class NoSuchContainer(RuntimeFault):
    code = "NoSuchContainer"


class AgentUnknown(RuntimeFault):
    code = "AgentUnknown"


class AgentTerminated(RuntimeFault):
    code = "AgentTerminated"


class IllegalTransition(RuntimeFault):
    code = "IllegalTransition"


class RouteForbidden(RuntimeFault):
    code = "RouteForbidden"


class DigestMismatch(RuntimeFault):
    code = "DigestMismatch"


# --- protocol ---

class ProtocolError(ImobeError):
    code = "ProtocolError"


class DecodeError(ProtocolError):
    code = "DecodeError"

    UNKNOWN_KIND = "UnknownKind"
    MISSING_FIELD = "MissingField"
    BAD_VERSION = "BadVersion"


class ProtocolViolation(ProtocolError):
    code = "ProtocolViolation"


class WorkflowTimeout(ProtocolError):
    code = "Timeout"


# --- store / behaviors ---

class StoreError(ImobeError):
    code = "StoreError"


class InvalidKeyPrefix(StoreError):
    code = "InvalidKeyPrefix"


class StoreUnavailable(StoreError):
    code = "StoreUnavailable"


class UnsupportedScope(ImobeError):
    code = "UnsupportedScope"
