"""Exception types raised across the package."""

from __future__ import annotations


class NeutralOscError(Exception):
    """Base class for all package errors."""


class InsufficientSamples(NeutralOscError):
    pass


class IndexOutOfWindow(NeutralOscError, IndexError):
    pass


class InvalidOrder(NeutralOscError, ValueError):
    pass


class PreconditionViolated(NeutralOscError, ValueError):
    pass


class OutOfDomain(NeutralOscError, ValueError):
    pass


class ZeroPivot(NeutralOscError, ZeroDivisionError):
    pass


class SimulationOverflow(NeutralOscError, OverflowError):
    """Raised when a simulated value leaves the representable range.

    ``partial`` holds the trajectory computed before the offending step, so
    callers can still flush what they have.
    """

    def __init__(self, message: str, partial=None, step: int | None = None):
        super().__init__(message)
        self.partial = partial
        self.step = step


class CoeffSyntaxError(NeutralOscError, ValueError):
    def __init__(self, text: str, offset: int, expected: frozenset[str] | set[str]):
        self.text = text
        self.offset = offset
        self.expected = frozenset(expected)
        found = text[offset] if offset < len(text) else "end of input"
        exp = ", ".join(sorted(self.expected))
        super().__init__(f"syntax error at offset {offset} (found {found!r}); expected one of: {exp}")


class ConfigError(NeutralOscError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
