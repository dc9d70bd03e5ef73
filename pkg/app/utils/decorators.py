"""Timing decorator"""
import functools
import time
from typing import Any, Callable

from core.logging import get_logger

logger = get_logger("utils.decorators")


def timed(func: Callable) -> Callable:
    """
    Log wall-clock time of each call at DEBUG, and at ERROR when the call raises

    Args:
        func: function to wrap

    Returns:
        the wrapped function
    """
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        start_time = time.perf_counter()
        try:
            result = func(*args, **kwargs)
            logger.debug(f"{func.__name__} took {time.perf_counter() - start_time:.4f}s")
            return result
        except Exception as e:
            logger.error(f"{func.__name__} failed after {time.perf_counter() - start_time:.4f}s: {e}")
            raise
    return wrapper
