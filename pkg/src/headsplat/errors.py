"""Exception taxonomy shared by every module.

The CLI maps these onto its documented exit codes: parse errors -> 3,
invariant/input violations -> 4, numerical failures -> 5.
"""


class HeadsplatError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(HeadsplatError):
    """An argument violates an operation's precondition or a type invariant."""


class ParseError(HeadsplatError):
    """A file or message could not be parsed; the message names the offending field."""


class InvariantError(HeadsplatError):
    """Loaded or constructed data violates a documented data invariant."""


class NumericalError(HeadsplatError):
    """A numerical routine produced or received non-finite values."""
