"""API router"""
from fastapi import APIRouter

from api.endpoints import health, metrics, probe, runs

api_router = APIRouter()

api_router.include_router(health.router, prefix="/health", tags=["health"])
api_router.include_router(metrics.router, prefix="/metrics", tags=["metrics"])
api_router.include_router(probe.router, prefix="/probe", tags=["probe"])
api_router.include_router(runs.router, prefix="/runs", tags=["runs"])
