"""Health check endpoint"""
import platform
from datetime import datetime

from fastapi import APIRouter, Depends

from cl.methods import METHOD_REGISTRY
from core.config import settings
from core.dependencies import Services, get_services
from models.schemas import ComponentStatus, HealthResponse
from services.harness import BENCHMARKS

router = APIRouter()


@router.get("/", response_model=HealthResponse)
async def health_check(services: Services = Depends(get_services)) -> HealthResponse:
    """Version, data root presence and what the engine can run"""
    data_root = settings.DATA_ROOT
    runner = services.experiment_runner
    return HealthResponse(
        status="healthy",
        version=settings.VERSION,
        timestamp=datetime.now().isoformat(),
        data_root=str(data_root),
        data_root_present=data_root.exists(),
        methods=sorted(METHOD_REGISTRY),
        benchmarks=sorted(BENCHMARKS),
        components={
            "experiment_runner": ComponentStatus(
                status="up",
                details={"output_root": str(runner.output_root), "runs": len(runner.list_runs())},
            ),
            "system": ComponentStatus(
                status="up",
                details={"platform": platform.platform(), "python_version": platform.python_version()},
            ),
        },
    )
