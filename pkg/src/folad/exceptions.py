"""Exception types raised across the package."""


class FoladError(Exception):
    """Base class for every error raised by folad."""


class ContractError(FoladError, ValueError):
    """An operation was called with inputs that violate its preconditions."""


class FormatError(FoladError):
    """A file could not be parsed.

    ``line`` is the 1-based line number for line-oriented formats, else None.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class VersionMismatchError(FormatError):
    """The file was written with an incompatible format version."""


class CheckpointError(FormatError):
    """A checkpoint is corrupt or does not match the requested configuration."""
