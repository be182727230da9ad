"""Exception types shared across the package."""


class InputContractError(ValueError):
    """An argument or input file violates a documented precondition."""


class ConfigurationError(ValueError):
    """An experiment configuration value is missing, unknown, or out of range."""


class ProtocolError(RuntimeError):
    """Calls arrived in an order the propose/feedback protocol forbids."""
