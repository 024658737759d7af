"""Exception types shared across the package.

The command line maps these onto its exit codes: ConfigError to 1,
DataError to 2, NotFoundError to 3.
"""


class DiscatError(Exception):
    """Base class for errors raised deliberately by this package."""


class ConfigError(DiscatError):
    """A run configuration that cannot be used as given."""


class DataError(DiscatError):
    """Malformed input: corpus lines, tree text, vocabulary or embedding files."""


class NotFoundError(DiscatError):
    """A referenced file or record does not exist."""
