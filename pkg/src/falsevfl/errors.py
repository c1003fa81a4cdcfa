"""Error types shared across the package."""


class ConfigurationError(ValueError):
    """Bad shapes, parameters, or file contents supplied by the caller."""


class UsageError(RuntimeError):
    """An operation was invoked in a state or with inputs it does not support."""


class FormatError(ConfigurationError):
    """A file does not match the expected on-disk format or version."""
