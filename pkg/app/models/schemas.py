"""Request and response models of the HTTP surface"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class ComponentStatus(BaseModel):
    status: str
    details: Dict[str, Any] = Field(default_factory=dict)


class HealthResponse(BaseModel):
    status: str
    version: str
    timestamp: str
    data_root: str
    data_root_present: bool
    methods: List[str]
    benchmarks: List[str]
    components: Dict[str, ComponentStatus] = Field(default_factory=dict)


class MetricsRequest(BaseModel):
    """Result matrix rows; row s holds accuracies on tasks 0..s (extra cells are ignored)"""
    r_matrix: List[List[float]] = Field(..., min_length=1, description="R[s][t], s = task just trained")

    model_config = {
        "json_schema_extra": {"example": {"r_matrix": [[0.9], [0.8, 0.95]]}}
    }


class MetricsResponse(BaseModel):
    acc: float = Field(..., description="mean of the final row")
    fgt: float = Field(..., description="mean peak-minus-final drop over earlier tasks")
    num_tasks: int


class SyntheticProbeRequest(BaseModel):
    """Two 1-D tasks with disjoint supports through a single KAN layer"""
    grid_intervals: int = Field(5, ge=1, le=64)
    order: int = Field(3, ge=0, le=5)
    n_per_task: int = Field(16, ge=1, le=1024)
    num_outputs: int = Field(2, ge=2, le=16)
    seed: int = Field(0, ge=0)


class SyntheticProbeResponse(BaseModel):
    grid_intervals: int
    order: int
    local_knots_task1: List[int]
    local_knots_task2: List[int]
    shared_knots: List[int]
    rho_bar: float
    fisher_product_at_local_knots: float
    cross_gram_max_at_local_knots: float
    spline_cross_rank: int
    kan_cross_rank: int
    mlp_cross_rank: int
    max_joint_active: int
    density_bound: int


class RunRef(BaseModel):
    benchmark: str
    method: str


class RunListResponse(BaseModel):
    output_root: str
    runs: List[RunRef]


class RunDetail(BaseModel):
    benchmark: str
    method: str
    aggregate: Dict[str, Any]
    summaries: List[Dict[str, Any]]
    error: Optional[str] = None
