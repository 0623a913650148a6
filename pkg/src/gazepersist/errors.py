"""Exception types shared across the toolkit.

Everything raised for bad inputs derives from :class:`GazeDataError`, which the
CLI maps to exit code 2. Argument errors also subclass :class:`ValueError` so
that callers using plain ``except ValueError`` keep working.
"""


class GazeDataError(Exception):
    """Base class for data and argument problems."""


class ArgumentError(GazeDataError, ValueError):
    pass


class ParseError(GazeDataError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmptyRecordingError(GazeDataError, ValueError):
    pass


class FormatError(GazeDataError, ValueError):
    pass


class DuplicateKeyError(GazeDataError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class TooShortError(GazeDataError, ValueError):
    pass


class DegenerateError(GazeDataError, ValueError):
    pass


class DomainError(GazeDataError, ValueError):
    pass


class InsufficientDataError(GazeDataError, ValueError):
    pass


class SubjectMismatchError(GazeDataError, ValueError):
    pass
