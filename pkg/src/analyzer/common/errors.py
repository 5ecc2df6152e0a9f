"""Error types raised by the analyzer and the exit codes the CLI maps them to."""
from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

# Error messages
ERROR_MESSAGES = {
    "validation": "The input failed validation.",
    "io": "A required file could not be read or written.",
}


class AnalysisError(Exception):
    """Base class for every failure the analyzer reports to its caller."""

    exit_code = EXIT_VALIDATION
    kind = "validation"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": self.kind,
            "type": type(self).__name__,
            "message": str(self) or ERROR_MESSAGES[self.kind],
            "exit_code": self.exit_code,
        }


class DataValidationError(AnalysisError, ValueError):
    """Input values violate a documented precondition."""


class ParseError(DataValidationError):
    """A measurement or schema file is malformed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        payload["line"] = self.line
        return payload


class IntegrityError(DataValidationError):
    """The measurement grid has gaps, duplicates or out-of-range indices."""


class InsufficientDataError(DataValidationError):
    """Too few values for the requested statistic."""


class UnknownBenchmarkError(AnalysisError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown benchmark"


class InputFileError(AnalysisError, OSError):
    exit_code = EXIT_IO
    kind = "io"
