"""API exception handlers"""
import json
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import ValidationError

from core.errors import SplineCLError
from core.logging import get_logger

logger = get_logger("api.errors")


def _plain(value: Any) -> Any:
    """Round-trip through json so numpy scalars and paths become plain values"""
    return json.loads(json.dumps(value, default=str))


async def validation_exception_handler(request: Request, exc: RequestValidationError) -> JSONResponse:
    """
    Handle FastAPI request validation errors

    Args:
        request: incoming request
        exc: validation error

    Returns:
        JSONResponse: 422
    """
    logger.error(f"Validation error for {request.url.path}: {str(exc)}")
    return JSONResponse(status_code=422, content={"detail": "Validation Error", "errors": _plain(exc.errors())})


async def pydantic_validation_exception_handler(request: Request, exc: ValidationError) -> JSONResponse:
    logger.error(f"Pydantic validation error for {request.url.path}: {str(exc)}")
    return JSONResponse(
        status_code=422,
        content={"detail": "Data Validation Error", "errors": _plain(exc.errors(include_url=False))},
    )


async def engine_exception_handler(request: Request, exc: SplineCLError) -> JSONResponse:
    """Engine errors are caller errors: 400 with the error kind and its details"""
    logger.error(f"{type(exc).__name__} for {request.url.path}: {exc.message}")
    return JSONResponse(
        status_code=400,
        content={"detail": exc.message, "error": type(exc).__name__, "details": _plain(exc.details)},
    )


async def general_exception_handler(request: Request, exc: Exception) -> JSONResponse:
    error_id = str(id(exc))
    logger.error(f"Unhandled error {error_id} for {request.url.path}: {str(exc)}", exc_info=True)
    return JSONResponse(
        status_code=500,
        content={"detail": "Internal Server Error", "error_id": error_id, "message": str(exc)},
    )


def register_exception_handlers(app: FastAPI) -> None:
    app.add_exception_handler(RequestValidationError, validation_exception_handler)
    app.add_exception_handler(ValidationError, pydantic_validation_exception_handler)
    app.add_exception_handler(SplineCLError, engine_exception_handler)
    app.add_exception_handler(Exception, general_exception_handler)
