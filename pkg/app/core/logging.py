"""Logging setup"""
import logging
import sys
from pathlib import Path
from logging.handlers import RotatingFileHandler
from datetime import datetime
from core.config import settings

# Create the logs directory
log_dir = Path(settings.LOG_DIR)
log_dir.mkdir(parents=True, exist_ok=True)

# Log file path
log_file = Path(settings.LOG_FILE) if settings.LOG_FILE else log_dir / f"splinecl_{datetime.now().strftime('%Y%m%d')}.log"

# Shared formatter
formatter = logging.Formatter(settings.LOG_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')


def setup_logger(name: str) -> logging.Logger:
    """
    Configure and return a logger

    Args:
        name: logger name

    Returns:
        logging.Logger: configured logger
    """
    logger = logging.getLogger(name)

    # Handlers already attached means this logger was configured before
    if logger.handlers:
        return logger

    level = logging.getLevelName(settings.LOG_LEVEL.upper())
    if not isinstance(level, int):
        level = logging.INFO
    logger.setLevel(level)

    # Console handler
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    console_handler.setLevel(level)
    logger.addHandler(console_handler)

    # File handler
    file_handler = RotatingFileHandler(
        log_file,
        maxBytes=10*1024*1024,  # 10MB
        backupCount=5,
        encoding='utf-8'
    )
    file_handler.setFormatter(formatter)
    file_handler.setLevel(level)
    logger.addHandler(file_handler)

    logger.propagate = False

    return logger


# Root logger of the package
root_logger = setup_logger("splinecl")


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance

    Args:
        name: logger name, prefixed with "splinecl."

    Returns:
        logging.Logger: logger instance
    """
    return setup_logger(f"splinecl.{name}")
