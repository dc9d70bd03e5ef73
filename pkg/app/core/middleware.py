"""Request logging middleware"""
import time

from fastapi import Request
from starlette.middleware.base import BaseHTTPMiddleware

from core.logging import get_logger

logger = get_logger("core.middleware")


class RequestLogMiddleware(BaseHTTPMiddleware):
    """DEBUG line per request; WARNING for 404s with the query string"""

    async def dispatch(self, request: Request, call_next):
        start = time.perf_counter()
        response = await call_next(request)
        elapsed = time.perf_counter() - start
        if response.status_code == 404:
            logger.warning(
                f"404 Not Found: {request.method} {request.url.path} query={dict(request.query_params)}"
            )
        else:
            logger.debug(f"{request.method} {request.url.path} -> {response.status_code} in {elapsed:.4f}s")
        return response
