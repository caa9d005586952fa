"""Exception hierarchy shared across the package.

Each error carries an ``exit_code`` so the CLI can map failures onto its
exit-status taxonomy (1 IO, 2 validation, 3 config) without a lookup table.
"""

from __future__ import annotations


class SubActionError(Exception):
    exit_code = 2


class MalformedFile(SubActionError):
    """A document failed to parse at the syntax level."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class InvariantViolation(SubActionError):
    """A document parsed but broke a type invariant; ``location`` is a JSON path."""

    def __init__(self, message: str, location: str):
        self.location = location
        super().__init__(f"{location}: {message}")


class UnknownAction(SubActionError, KeyError):
    def __init__(self, name: str):
        self.name = name
        SubActionError.__init__(self, f"unknown action {name!r}")

    def __str__(self) -> str:
        return self.args[0]


class DimensionMismatch(SubActionError, ValueError):
    pass


class DuplicateIds(SubActionError, ValueError):
    pass


class LengthMismatch(SubActionError, ValueError):
    pass


class TooShort(SubActionError, ValueError):
    pass


class OutOfRange(SubActionError, ValueError):
    pass


class IndexOutOfRange(SubActionError, IndexError):
    pass


class TooFewCompletions(SubActionError, ValueError):
    pass


class ConfigInvalid(SubActionError):
    exit_code = 3


class IoFailure(SubActionError):
    exit_code = 1
