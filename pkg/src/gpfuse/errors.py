"""Exception hierarchy for gpfuse."""


class GpfuseError(Exception):
    """Base class for all gpfuse errors."""


class FormatError(GpfuseError):
    """Malformed container file (bad magic, version, or truncated data)."""


class IncompleteBankError(GpfuseError):
    """A protein is missing one or more of the 16 required feature matrices."""


class DataError(GpfuseError):
    """Non-finite or otherwise invalid values inside a feature bank."""


class ShapeError(GpfuseError):
    """Incompatible array shapes passed to a numerical kernel."""


class ParseError(GpfuseError):
    """Malformed program text; carries the offending position."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position
