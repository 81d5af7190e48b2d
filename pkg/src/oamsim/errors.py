"""Exception types shared across the package."""


class OamSimError(Exception):
    """Base class for all package errors."""


class ValidationError(OamSimError, ValueError):
    """An argument or configuration violates a documented precondition."""


class InputFormatError(OamSimError):
    """A file could not be parsed into one of the package's data types."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class InvariantViolation(OamSimError):
    """A numerical identity that must hold exactly was broken (indicates a bug)."""
