"""Experiment and architecture configuration models"""
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

BENCHMARKS = (
    "split_mnist_5t",
    "permuted_mnist_10t",
    "rotation_mnist_10t",
    "split_cifar10_5t",
    "split_cifar100_10t",
)
METHODS = ("finetune", "ewc", "si", "kan_cl", "kan_cl_bbewc", "mlp_bbewc", "replay", "kan_cl_replay")
MODEL_KINDS = ("pure_kan", "pure_mlp", "cnn_kan", "cnn_mlp")
PROTOCOLS = ("task_il", "class_il", "domain_il")

BenchmarkName = Literal[
    "split_mnist_5t", "permuted_mnist_10t", "rotation_mnist_10t", "split_cifar10_5t", "split_cifar100_10t"
]
MethodName = Literal["finetune", "ewc", "si", "kan_cl", "kan_cl_bbewc", "mlp_bbewc", "replay", "kan_cl_replay"]
ModelKind = Literal["pure_kan", "pure_mlp", "cnn_kan", "cnn_mlp"]
Protocol = Literal["task_il", "class_il", "domain_il"]

# Methods that regularize spline coefficients need a KAN head
KAN_HEAD_METHODS = {"kan_cl", "kan_cl_bbewc", "kan_cl_replay"}
# Methods that regularize backbone.* and feat_norm.* need a CNN backbone
BACKBONE_METHODS = {"kan_cl_bbewc", "mlp_bbewc"}
MLP_HEAD_METHODS = {"mlp_bbewc"}


def is_mnist(benchmark: str) -> bool:
    return "mnist" in benchmark


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ArchitectureConfig(_Block):
    """Model family and widths; `kind = auto` is resolved against benchmark and method"""
    kind: Literal["auto", "pure_kan", "pure_mlp", "cnn_kan", "cnn_mlp"] = "auto"
    hidden: Optional[List[int]] = Field(None, description="head hidden widths; default [64] pure, [128, 128] hybrid")
    grid: int = Field(5, ge=1, description="grid intervals G")
    order: int = Field(3, ge=0, description="spline order d")
    stem_width: int = Field(32, ge=1)
    backbone_widths: List[int] = Field(default_factory=lambda: [32, 64, 128])
    feature_dim: int = Field(256, ge=1)

    @field_validator("hidden", "backbone_widths")
    @classmethod
    def _positive_widths(cls, value):
        if value is not None and any(w < 1 for w in value):
            raise ValueError("widths must be positive")
        return value

    @field_validator("backbone_widths")
    @classmethod
    def _nonempty(cls, value):
        if not value:
            raise ValueError("backbone needs at least one stage")
        return value


class OptimizerConfig(_Block):
    lr: float = Field(1e-3, gt=0)
    batch_size: int = Field(128, ge=1)
    epochs: Optional[int] = Field(None, ge=1, description="None resolves to 4 (MNIST) or 10 (CIFAR)")
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0)

    @field_validator("betas")
    @classmethod
    def _betas_range(cls, value):
        if not all(0.0 <= b < 1.0 for b in value):
            raise ValueError("betas must lie in [0, 1)")
        return value


class MethodConfig(_Block):
    """Hyperparameters of every CL mechanism; each method reads the subset it needs"""
    lambda_anchor: float = Field(500.0, ge=0, alias="lambda")
    beta: float = Field(5.0, ge=0)
    alpha_f: float = Field(1.0, ge=0)
    alpha_a: float = Field(0.5, ge=0)
    lambda_b: float = Field(1000.0, ge=0)
    ewc_lambda: float = Field(1000.0, ge=0)
    si_lambda: float = Field(1.0, ge=0)
    gamma: float = Field(1.0, ge=0, le=1)
    xi: float = Field(0.1, gt=0)
    rho: float = Field(0.1, ge=0, le=1)
    delta: float = Field(1.0, ge=0)
    buffer_capacity: int = Field(1000, ge=0)
    fisher_sample_cap: Optional[int] = Field(None, ge=1, description="None resolves to all (MNIST) or 2048 (CIFAR)")
    fisher_model_labels: bool = False
    regularize_base_weights: bool = False


class DataConfig(_Block):
    train_per_task: Optional[int] = Field(None, ge=1)
    test_per_task: Optional[int] = Field(None, ge=1)
    num_tasks: Optional[int] = Field(None, ge=1)
    classes_per_task: Optional[int] = Field(None, ge=1)
    pin_classes: bool = False
    rotation_mode: Literal["bilinear", "nearest"] = "bilinear"


class OutputConfig(_Block):
    dir: str = Field("", description="empty means settings.OUTPUT_ROOT")
    checkpoints: bool = False
    resume: bool = False


class ExperimentConfig(_Block):
    """One benchmark x method run over a list of seeds"""
    benchmark: BenchmarkName = "split_mnist_5t"
    method: MethodName = "kan_cl"
    protocol: Protocol = "task_il"
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    architecture: ArchitectureConfig = Field(default_factory=ArchitectureConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    method_block: MethodConfig = Field(default_factory=MethodConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, value):
        if not value:
            raise ValueError("at least one seed is required")
        if any(s < 0 or s >= 2**64 for s in value):
            raise ValueError("seeds must be 64-bit unsigned integers")
        return value

    @model_validator(mode="after")
    def _compatible(self):
        kind = self.model_kind
        if self.method in KAN_HEAD_METHODS and not kind.endswith("kan"):
            raise ValueError(f"method {self.method} needs a KAN head, got {kind}")
        if self.method in BACKBONE_METHODS and not kind.startswith("cnn"):
            raise ValueError(f"method {self.method} needs a CNN backbone, got {kind}")
        if self.method in MLP_HEAD_METHODS and kind != "cnn_mlp":
            raise ValueError(f"method {self.method} pairs the CNN backbone with an MLP head, got {kind}")
        return self

    @property
    def model_kind(self) -> str:
        if self.architecture.kind != "auto":
            return self.architecture.kind
        head = "mlp" if self.method in MLP_HEAD_METHODS else "kan"
        body = "cnn" if self.method in BACKBONE_METHODS or not is_mnist(self.benchmark) else "pure"
        return f"{body}_{head}"

    @property
    def epochs(self) -> int:
        if self.optimizer.epochs is not None:
            return self.optimizer.epochs
        return 4 if is_mnist(self.benchmark) else 10

    @property
    def fisher_sample_cap(self) -> Optional[int]:
        """None means the whole task"""
        if self.method_block.fisher_sample_cap is not None:
            return self.method_block.fisher_sample_cap
        return None if is_mnist(self.benchmark) else 2048


class ModelSpec(_Block):
    """Fully resolved input to build_model"""
    kind: ModelKind
    num_classes: int = Field(..., ge=1)
    input_shape: Tuple[int, int, int] = Field(..., description="(channels, height, width)")
    hidden: Optional[List[int]] = None
    grid: int = Field(5, ge=1)
    order: int = Field(3, ge=0)
    stem_width: int = Field(32, ge=1)
    backbone_widths: List[int] = Field(default_factory=lambda: [32, 64, 128])
    feature_dim: int = Field(256, ge=1)
    seed: int = Field(0, ge=0)

    @field_validator("input_shape")
    @classmethod
    def _shape(cls, value):
        if any(v < 1 for v in value):
            raise ValueError("input_shape entries must be positive")
        return value

    @classmethod
    def from_experiment(cls, config: ExperimentConfig, num_classes: int, input_shape, seed: int) -> "ModelSpec":
        arch = config.architecture
        return cls(
            kind=config.model_kind,
            num_classes=num_classes,
            input_shape=tuple(input_shape),
            hidden=arch.hidden,
            grid=arch.grid,
            order=arch.order,
            stem_width=arch.stem_width,
            backbone_widths=arch.backbone_widths,
            feature_dim=arch.feature_dim,
            seed=seed,
        )
