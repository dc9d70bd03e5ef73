"""Read-only view of finished experiments under OUTPUT_ROOT"""
from fastapi import APIRouter, Depends, HTTPException

from core.dependencies import Services, get_services
from core.logging import get_logger
from models.schemas import RunDetail, RunListResponse, RunRef

logger = get_logger("api.runs")
router = APIRouter()


@router.get("/", response_model=RunListResponse)
async def list_runs(services: Services = Depends(get_services)) -> RunListResponse:
    runner = services.experiment_runner
    runs = [RunRef(**ref) for ref in runner.list_runs()]
    logger.info(f"API returning {len(runs)} runs")
    return RunListResponse(output_root=str(runner.output_root), runs=runs)


@router.get("/{benchmark}/{method}", response_model=RunDetail)
async def get_run(benchmark: str, method: str, services: Services = Depends(get_services)) -> RunDetail:
    run = services.experiment_runner.load_run(benchmark, method)
    if run is None:
        raise HTTPException(status_code=404, detail=f"no aggregate.json for {benchmark}/{method}")
    return RunDetail(benchmark=benchmark, method=method, **run)
