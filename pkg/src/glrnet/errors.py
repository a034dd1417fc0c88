"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """An invalid or internally inconsistent setting (e.g. BP with a threshold net)."""


class StructuralError(ValueError):
    """Array shapes or lengths that do not fit the network layout."""


class UnsupportedActivationError(ConfigurationError):
    """A derivative-based routine was asked to handle a non-smooth activation."""


class UndefinedMetricError(ValueError):
    """A metric was requested over an empty collection."""


class FormatError(ValueError):
    """A binary file could not be parsed.

    The message names the offending field.
    """
