"""Disjoint-support probe"""
from dataclasses import asdict

from fastapi import APIRouter
from fastapi.concurrency import run_in_threadpool

from core.logging import get_logger
from models.schemas import SyntheticProbeRequest, SyntheticProbeResponse
from services.ntk_probe import synthetic_disjoint_support

logger = get_logger("api.probe")
router = APIRouter()


@router.post("/synthetic", response_model=SyntheticProbeResponse)
async def synthetic_probe(request: SyntheticProbeRequest) -> SyntheticProbeResponse:
    report = await run_in_threadpool(synthetic_disjoint_support, **request.model_dump())
    logger.info(
        f"synthetic probe G={request.grid_intervals} k={request.order}: "
        f"kan rank {report.kan_cross_rank}, mlp rank {report.mlp_cross_rank}"
    )
    return SyntheticProbeResponse(**asdict(report))
