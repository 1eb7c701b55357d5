"""Exception taxonomy shared by all fcgraph modules.

Validation-type failures (bad values, bad shapes, malformed content) map to
CLI exit code 1; operating-system level IO failures (missing files,
unreadable directories) are left as ``OSError`` and map to exit code 2.
"""


class FcgraphError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(FcgraphError):
    """Input violates a documented precondition or type invariant."""


class ParseError(ValidationError):
    """Malformed file content; message names the offending row/column."""


class DimensionError(ValidationError):
    """Shapes of paired inputs do not conform."""


class ConditioningError(FcgraphError):
    """A linear system is numerically rank deficient."""

    def __init__(self, message: str, offending_columns: list[str] | None = None):
        super().__init__(message)
        self.offending_columns = offending_columns or []


class FormatError(FcgraphError):
    """Unknown magic bytes or unsupported format version."""


class DatasetLoadError(FcgraphError):
    """A stored dataset failed validation; names the graph index."""

    def __init__(self, message: str, graph_index: int | None = None):
        super().__init__(message)
        self.graph_index = graph_index
