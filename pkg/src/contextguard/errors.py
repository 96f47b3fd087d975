"""Exception hierarchy shared across the package."""


class ContextGuardError(Exception):
    """Base class for every error raised by this package."""


class ContractViolationError(ContextGuardError):
    """An operation was called with arguments that violate its contract."""


class EncodingError(ContextGuardError):
    """Input is not valid UTF-8."""


class ConfigurationError(ContextGuardError):
    """Invalid or incomplete configuration."""


class BudgetInfeasibleError(ConfigurationError):
    """The memory budget cannot hold even the recent window."""


class EndpointError(ContextGuardError):
    """A model endpoint was unreachable or returned a malformed reply."""


class DispatchError(ContextGuardError):
    """Dispatch to a tier endpoint failed after the configured retries."""


class PayloadTamperError(DispatchError):
    """The payload changed between routing and dispatch (digest mismatch)."""


class RoutingBlockedError(ContextGuardError):
    """The zero-trust gate blocked an outbound payload."""

    def __init__(self, message: str, decision=None):
        super().__init__(message)
        self.decision = decision


class CompressionBackendError(ContextGuardError):
    """The external compression backend failed; carries the extractive fallback."""

    def __init__(self, message: str, fallback=None):
        super().__init__(message)
        self.fallback = fallback
