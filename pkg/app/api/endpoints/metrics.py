"""ACC / FGT from a posted result matrix"""
from fastapi import APIRouter

from core.logging import get_logger
from models.schemas import MetricsRequest, MetricsResponse
from services.harness import ResultMatrix, acc_metric, fgt_metric

logger = get_logger("api.metrics")
router = APIRouter()


@router.post("/", response_model=MetricsResponse)
async def compute_metrics(request: MetricsRequest) -> MetricsResponse:
    """MetricError (incomplete rows) surfaces as a 400 through the error handlers"""
    R = ResultMatrix.from_rows(request.r_matrix)
    response = MetricsResponse(acc=acc_metric(R), fgt=fgt_metric(R), num_tasks=R.num_tasks)
    logger.debug(f"metrics for a {R.num_tasks}-task matrix: acc={response.acc:.4f} fgt={response.fgt:.4f}")
    return response
