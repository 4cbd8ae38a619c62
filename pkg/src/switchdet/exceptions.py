"""Exception hierarchy shared across the package."""


class SwitchDetError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SwitchDetError, ValueError):
    """Invalid value for the operation's domain (bad state, bad interval, ...)."""


class CapacityError(DomainError):
    """More concurrent instances than switches under the strict encode policy."""


class ProtocolError(SwitchDetError, RuntimeError):
    """Stateful object driven out of order (non-consecutive frames, reuse after finalize)."""
