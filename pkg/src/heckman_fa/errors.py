"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to, so the
code table lives in one place.
"""

from __future__ import annotations


class HeckmanFAError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(HeckmanFAError):
    exit_code = 3


class ParseError(HeckmanFAError):
    exit_code = 4

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(HeckmanFAError):
    exit_code = 5


class NonFinite(HeckmanFAError):
    exit_code = 6

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ZeroVariance(HeckmanFAError):
    exit_code = 7

    def __init__(self, feature: str):
        super().__init__(f"feature {feature!r} has zero variance")
        self.feature = feature


class EmptySelection(HeckmanFAError):
    exit_code = 8


class DegenerateSplit(HeckmanFAError):
    exit_code = 9


class DegenerateSelection(HeckmanFAError):
    exit_code = 10


class NonConvergence(HeckmanFAError):
    exit_code = 11


class SingularDesign(HeckmanFAError):
    exit_code = 12


class InsufficientSamples(HeckmanFAError):
    exit_code = 13


class AllZeroMask(HeckmanFAError):
    exit_code = 14


class NoCandidateInRange(HeckmanFAError):
    exit_code = 15

    def __init__(self, message: str, rho_summary: dict | None = None):
        super().__init__(message)
        self.rho_summary = rho_summary or {}


class ZeroVarianceDifferences(HeckmanFAError):
    exit_code = 16


class OutputError(HeckmanFAError):
    exit_code = 17


class FullSelectionWarning(UserWarning):
    """A bias rule kept every row, so no outcome was hidden."""


EXIT_CODES: dict[str, int] = {
    cls.__name__: cls.exit_code
    for cls in (
        HeckmanFAError,
        ConfigError,
        ParseError,
        SchemaError,
        NonFinite,
        ZeroVariance,
        EmptySelection,
        DegenerateSplit,
        DegenerateSelection,
        NonConvergence,
        SingularDesign,
        InsufficientSamples,
        AllZeroMask,
        NoCandidateInRange,
        ZeroVarianceDifferences,
        OutputError,
    )
}
