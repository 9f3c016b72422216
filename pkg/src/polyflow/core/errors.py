from typing import Any

from fastapi import Request
from fastapi.responses import JSONResponse


class AppError(Exception):
    """Base error with a structured body, an HTTP status and a CLI exit code."""

    code: str = "APP_ERROR"
    status_code: int = 400
    exit_code: int = 1

    def __init__(
        self,
        message: str,
        details: dict[str, Any] | None = None,
        code: str | None = None,
    ) -> None:
        self.message = message
        self.details: dict[str, Any] = dict(details or {})
        if code is not None:
            self.code = code
        super().__init__(message)

    def annotate(self, **context: Any) -> "AppError":
        """Attach context (node id, step index, ...) without overwriting existing keys."""
        for key, value in context.items():
            self.details.setdefault(key, value)
        return self

    def to_dict(self) -> dict[str, Any]:
        return _error_body(self.code, self.message, self.details or None)


class ConfigError(AppError):
    code = "CONFIG_INVALID"
    status_code = 422
    exit_code = 2


class NumericalFailure(AppError):
    """Any failure of the numerical pipeline; the CLI exits with code 3."""

    code = "NUMERICAL_FAILURE"
    status_code = 500
    exit_code = 3


class FeasibilityViolation(NumericalFailure):
    """A FENE configuration left the open ball |q|^2 < b."""

    code = "FEASIBILITY_VIOLATION"


class DegenerateEnsemble(NumericalFailure):
    code = "DEGENERATE_ENSEMBLE"


class OptimizerDivergence(NumericalFailure):
    code = "OPTIMIZER_DIVERGENCE"


class SizeMismatch(NumericalFailure):
    code = "SIZE_MISMATCH"


class LinearSolveFailure(NumericalFailure):
    code = "LINEAR_SOLVE_FAILURE"


class RejectionOverflow(NumericalFailure):
    code = "REJECTION_OVERFLOW"


class DegenerateLoop(NumericalFailure):
    code = "DEGENERATE_LOOP"


def _error_body(code: str, message: str, details: Any = None) -> dict:
    body: dict = {"code": code, "message": message}
    if details is not None:
        body["details"] = details
    return body


async def app_error_handler(request: Request, exc: AppError) -> JSONResponse:
    return JSONResponse(
        status_code=exc.status_code,
        content=_error_body(exc.code, exc.message, exc.details or None),
    )


def _sanitize_errors(errors: list[dict]) -> list[dict]:
    """Convert non-JSON-serializable values (e.g. exceptions in ctx) to strings."""
    sanitized = []
    for err in errors:
        entry = {k: v for k, v in err.items() if k != "ctx"}
        if "ctx" in err:
            entry["ctx"] = {k: str(v) for k, v in err["ctx"].items()}
        sanitized.append(entry)
    return sanitized


async def validation_error_handler(request: Request, exc: Exception) -> JSONResponse:
    raw_errors = exc.errors() if hasattr(exc, "errors") else []
    return JSONResponse(
        status_code=422,
        content=_error_body(
            code="INVALID_INPUT",
            message="Request validation failed.",
            details=_sanitize_errors(raw_errors),
        ),
    )
