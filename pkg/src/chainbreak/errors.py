"""Exception types shared across the package."""


class ChainbreakError(Exception):
    """Base class for all package-specific errors."""


class PotentialFormatError(ChainbreakError):
    """Malformed potential definition (bad coefficients, keys, or ordering)."""


class EvaluationError(ChainbreakError):
    """A potential evaluation produced a non-finite value."""


class ExtensionError(ChainbreakError):
    """The convex extension of a potential could not be built."""


class ConfigError(ChainbreakError):
    """Invalid model or integrator configuration."""


class PreconditionError(ChainbreakError):
    """An operation was called outside its stated domain of validity."""


class IntegrationError(ChainbreakError):
    """A deterministic solve failed its internal accuracy check."""
