"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SkelError(Exception):
    exit_code = 1


class UsageError(SkelError):
    exit_code = 2


class FormatError(SkelError):
    """Malformed or unreadable file (bad magic, truncated payload)."""

    exit_code = 3


class ShapeError(SkelError, ValueError):
    """Shape mismatch, grid too small or another invariant violation."""

    exit_code = 4


class DivergenceError(SkelError, FloatingPointError):
    exit_code = 5


class StaleTapeError(SkelError, RuntimeError):
    exit_code = 4
