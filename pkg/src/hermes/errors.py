class HermesError(Exception):
    """Base class for toolkit errors."""


class DomainError(HermesError, ValueError):
    """An argument lies outside the domain of an operation."""


class StructuralError(HermesError, ValueError):
    """A path or graph record is malformed."""


class ConfigError(HermesError, ValueError):
    """Invalid configuration. ``messages`` names every offending key."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class UnsupportedSizeError(HermesError, ValueError):
    pass


class InsufficientBandwidthError(HermesError, ValueError):
    pass


class ProtocolViolation(HermesError, RuntimeError):
    """Replicated protocol state diverged between nodes."""


class OrderingFault(HermesError, RuntimeError):
    pass


class RoutingFault(HermesError, LookupError):
    pass


class SizeLimitError(HermesError, ValueError):
    pass


class PortLimitError(HermesError, ValueError):
    pass
