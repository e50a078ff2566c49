"""Error types and the tool wrapper shared by the CLI and the MCP server."""

from typing import Any, Dict, Optional
import functools
import json

from .utils import logger

# Process exit codes
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_TOOL = 4


class LadderError(Exception):
    """Base exception for every bitrate-ladder failure."""
    exit_code = EXIT_DATA

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)

        logger.error(f"{type(self).__name__}: {self.message}")
        if self.details:
            logger.debug(f"Error details: {self.details}")

    def to_dict(self) -> Dict[str, Any]:
        """Structured form returned by tools and written to reports."""
        error = {"type": type(self).__name__, "message": self.message}
        if self.details:
            error["details"] = self.details
        return {"error": error}


class UsageError(LadderError):
    """Invalid arguments or configuration."""
    exit_code = EXIT_USAGE


class DataError(LadderError):
    """Invalid measurement, ladder or report data."""
    exit_code = EXIT_DATA


class MeasurementError(DataError):
    """A measurement row or file violates the schema or a point invariant."""

    def __init__(self, message: str, line: Optional[int] = None, details: Optional[Dict[str, Any]] = None):
        self.line = line
        details = dict(details or {})
        if line is not None:
            details["line"] = line
            message = f"line {line}: {message}"
        super().__init__(message, details)


class DuplicateKeyError(MeasurementError):
    """Two points share the same (sequence, resolution, qp) key."""


class SequenceMismatchError(DataError):
    """Operands describe different sequences."""


class EmptyInputError(DataError):
    """An operation received nothing to work on."""


class MissingMetricError(DataError):
    """A point lacks the quality metric an operation needs."""


class InsufficientSamplesError(DataError):
    """A rate-quality curve has fewer than two distinct samples."""


class OverlapError(DataError):
    """Two rate-quality curves do not overlap on the integration axis."""


class ToolError(LadderError):
    """An external encoder, decoder or metric tool failed."""
    exit_code = EXIT_TOOL


def ladder_tool(func):
    """Decorator for MCP tools: logs the call and turns errors into JSON."""
    @functools.wraps(func)
    async def wrapper(*args, **kwargs):
        logger.debug(f"Tool call: {func.__name__}")
        logger.debug(f"Kwargs: {kwargs}")
        try:
            result = await func(*args, **kwargs)
        except LadderError as e:
            return json.dumps(e.to_dict(), indent=2)
        except Exception as e:
            logger.error(f"Unexpected error in {func.__name__}: {e}")
            return json.dumps({"error": {"type": type(e).__name__, "message": str(e)}}, indent=2)

        if isinstance(result, (dict, list)):
            return json.dumps(result, indent=2)
        return result

    return wrapper
