"""Exception hierarchy shared across the package."""


class RelgradeError(Exception):
    """Base class for all library errors."""


class UsageError(RelgradeError, ValueError):
    """The caller violated a precondition (bad arguments, shape mismatch, duplicates)."""


class DomainError(RelgradeError, ValueError):
    """The inputs are well-formed but the operation is undefined on them."""


class FormatError(UsageError):
    """A file did not parse according to its schema.

    Attributes:
        path: file being read, if known.
        line: 1-based line number of the offending record, if known.
    """

    def __init__(self, message: str, path=None, line: int | None = None) -> None:
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += f"{path}:"
        if line is not None:
            prefix += f"{line}:"
        super().__init__(f"{prefix} {message}" if prefix else message)
