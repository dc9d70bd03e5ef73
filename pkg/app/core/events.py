"""Application lifespan"""
from contextlib import asynccontextmanager

from fastapi import FastAPI

from core.dependencies import get_services
from core.logging import get_logger

logger = get_logger("core.events")


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info("Starting application...")
    services = get_services()
    yield
    logger.info("Shutting down application...")
    await services.cleanup()
    logger.info("Application shutdown complete")
