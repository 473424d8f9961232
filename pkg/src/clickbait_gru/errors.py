"""Exception types shared across the pipeline.

Exit-code mapping in the CLI: usage errors exit 1, DataError exits 2,
NumericError exits 3.
"""


class DataError(Exception):
    """Input data violates the expected schema or contract."""


class ParseError(DataError):
    """A specific line of an input file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(Exception):
    """Training or evaluation produced a non-finite value."""
