"""Exception types shared across the package."""


class WncsError(Exception):
    """Base class for all package errors."""


class NonSingularityViolated(WncsError):
    pass


class NotControllable(WncsError):
    pass


class SynthesisFailed(WncsError):
    pass


class NoConvergence(WncsError):
    pass


class InvalidAction(WncsError):
    pass


class CapacityExceeded(WncsError):
    pass


class IndexOrder(WncsError):
    pass


class LengthMismatch(WncsError):
    pass


class ScriptTooShort(WncsError):
    pass


class ShapeMismatch(WncsError):
    pass


class NonFiniteLoss(WncsError):
    pass


class FormatError(WncsError):
    pass


class VersionMismatch(WncsError):
    pass


class ConfigError(WncsError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class SchemaError(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass


class ProbabilityRange(ConfigError):
    pass
