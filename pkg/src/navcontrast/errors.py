"""Exception types shared across the package."""


class NavContrastError(Exception):
    """Base class for all package errors."""


class ConfigError(NavContrastError):
    """Invalid configuration value or malformed config file."""


class DisconnectedError(NavContrastError):
    """Goal unreachable from start on the given graph."""


class NonFiniteLossError(NavContrastError):
    """A loss evaluated to NaN or infinity; the training step was aborted."""
