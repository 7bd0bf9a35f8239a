"""Exception hierarchy shared by every qtnet module."""


class QTNetError(Exception):
    """Base class; the CLI maps these to machine-readable error objects."""

    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class InvalidArgumentError(QTNetError, ValueError):
    code = "invalid-argument"


class DegenerateInputError(QTNetError, ValueError):
    code = "degenerate-input"


class ShapeError(QTNetError, ValueError):
    code = "shape-error"


class UndefinedValueError(QTNetError, ArithmeticError):
    code = "undefined-value"


class ParseError(QTNetError, ValueError):
    code = "parse-error"

    def __init__(self, message, line=None, column=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.line = line
        self.column = column


class StructuralError(ParseError):
    code = "structural-error"


class UnsupportedFormatError(QTNetError, ValueError):
    code = "unsupported-format"

    def __init__(self, format_code, line=None, message=None):
        text = message or f"unsupported WFDB signal format {format_code}"
        if line is not None:
            text = f"{text} (line {line})"
        super().__init__(text)
        self.format_code = format_code
        self.line = line


class TruncationError(QTNetError, ValueError):
    code = "truncation"

    def __init__(self, expected, actual):
        super().__init__(f"signal data truncated: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


class SchemaError(QTNetError, KeyError):
    code = "schema-error"

    def __init__(self, column, message=None):
        super().__init__(column)
        self.column = column
        self.message = message

    def __str__(self):
        return self.message or f"missing required column {self.column!r}"


class IncompleteTimelineError(QTNetError, ValueError):
    code = "incomplete-timeline"


class MissingLeadError(QTNetError, LookupError):
    code = "missing-lead"


class InsufficientBeatsError(QTNetError, ValueError):
    code = "insufficient-beats"


class DelineationFailureError(QTNetError, ValueError):
    code = "delineation-failure"


class ConfigError(QTNetError, ValueError):
    code = "config-error"


class SplitContaminationError(QTNetError, ValueError):
    code = "split-contamination"


class IncompatibleCheckpointError(QTNetError):
    code = "incompatible-checkpoint"


class CorruptCheckpointError(QTNetError):
    code = "corrupt-checkpoint"


class InvalidDatasetError(QTNetError, ValueError):
    code = "invalid-dataset"
