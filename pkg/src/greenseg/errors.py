"""Exception types shared across the package."""


class GreensegError(Exception):
    """Base class for all package errors."""


class ArgumentError(GreensegError, ValueError):
    """An argument is outside its allowed domain."""


class StateError(GreensegError):
    """An object is not in a state that permits the operation."""


class ParseError(GreensegError):
    """A room file line could not be parsed."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyInputError(GreensegError):
    """An input file or collection held no data."""


class FormatError(GreensegError):
    """A binary file does not match its declared layout."""
