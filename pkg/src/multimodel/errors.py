"""Exception types shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for every error raised by this package."""


class ParseError(PipelineError):
    """CSV input could not be interpreted under the active schema.

    Carries the 1-based physical line number and, when known, the column name.
    """

    def __init__(self, message: str, *, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class MissingColumnError(ParseError):
    """Header lacks a column the schema requires."""


class BadValueError(ParseError):
    """A field failed numeric parsing or has no encoding entry."""


class EmptyDatasetError(PipelineError):
    """An operation that needs at least one record received none."""


class DimensionMismatchError(PipelineError):
    """Feature vector length differs from the fitted dimension."""


class InvalidParamsError(PipelineError):
    """Arguments outside an operation's accepted range."""


class DuplicateModelIdError(PipelineError):
    """Two roster entries share a model id."""


class InvalidHyperparameterError(PipelineError):
    """A model spec carries an unknown or out-of-range hyperparameter."""


class MixedPatientIdsError(PipelineError):
    """A consolidation group mixes prediction vectors from different patients."""


class DuplicateModelError(PipelineError):
    """A consolidation group contains the same model twice."""


class IncompleteGroupError(PipelineError):
    """A consolidation group does not match the configured model count."""


class LengthMismatchError(PipelineError):
    """Paired sequences have different lengths."""


class EmptyInputError(PipelineError):
    """A non-empty sequence was required."""


class OutOfRangeError(PipelineError):
    """A prediction value fell outside [0, 1]."""


class BundleLoadError(PipelineError):
    """A model bundle file is unreadable, malformed, or inconsistent."""


class DegenerateFitWarning(UserWarning):
    """Training hit a degenerate configuration and applied a documented fallback."""
