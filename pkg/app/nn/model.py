"""Composed models (pure or CNN hybrid, KAN or MLP head) and the path-named registry"""
import fnmatch
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from core.errors import ConfigError, ContractViolation, DimensionError
from core.logging import get_logger
from models.experiment import ModelSpec
from nn.base import Layer, Parameter, PathFilter
from nn.conv import CnnBackbone
from nn.kan import KanLayer
from nn.linear import MlpLayer
from nn.norm import FeatureNormalizer
from numerics.rng import Rng
from numerics.spline import SplineGrid

logger = get_logger("nn.model")

DEFAULT_PURE_HIDDEN = [64]
DEFAULT_HYBRID_HIDDEN = [128, 128]


def path_filter(patterns: Union[str, Sequence[str], PathFilter, None]) -> Optional[PathFilter]:
    """Glob pattern(s) such as 'backbone.*' or a predicate -> predicate over parameter paths"""
    if patterns is None or callable(patterns):
        return patterns
    if isinstance(patterns, str):
        patterns = [patterns]
    patterns = list(patterns)
    return lambda path: any(fnmatch.fnmatchcase(path, p) for p in patterns)


def kan_param_count(dims: Sequence[int], num_basis: int) -> int:
    """Each edge carries one base weight and K spline coefficients"""
    return sum(a * b * (num_basis + 1) for a, b in zip(dims[:-1], dims[1:]))


def mlp_param_count(dims: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


def match_mlp_hidden(
    in_dim: int, out_dim: int, kan_hidden: Sequence[int], num_basis: int, tolerance: float
) -> List[int]:
    """
    Widen the hidden layers of an MLP until its parameter count matches a KAN head

    Every hidden width is scaled by a common factor found by bisection.

    Args:
        in_dim: head input width
        out_dim: number of outputs
        kan_hidden: hidden widths of the KAN head being matched
        num_basis: K of the KAN head
        tolerance: allowed relative gap, e.g. 0.10 or 0.05

    Returns:
        List[int]: MLP hidden widths
    """
    target = kan_param_count([in_dim, *kan_hidden, out_dim], num_basis)
    if not kan_hidden:
        raise ConfigError("cannot match an MLP with no hidden layer")

    def widths(scale: float) -> List[int]:
        return [max(1, int(round(w * scale))) for w in kan_hidden]

    lo, hi = 0.0, 1.0
    while mlp_param_count([in_dim, *widths(hi), out_dim]) < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mlp_param_count([in_dim, *widths(mid), out_dim]) < target:
            lo = mid
        else:
            hi = mid
    best = min(
        (widths(lo), widths(hi)),
        key=lambda w: abs(mlp_param_count([in_dim, *w, out_dim]) - target),
    )
    gap = abs(mlp_param_count([in_dim, *best, out_dim]) - target) / target
    if gap > tolerance:
        raise ConfigError(
            f"could not match MLP to KAN parameter count within {tolerance:.0%}",
            {"target": target, "widths": best, "gap": gap},
        )
    return best


def mlp_head(dims: Sequence[int], rng: Rng) -> List[Layer]:
    """tanh hidden layers, identity output layer"""
    last = len(dims) - 2
    return [
        MlpLayer(a, b, rng.child(idx), activation="identity" if idx == last else "tanh")
        for idx, (a, b) in enumerate(zip(dims[:-1], dims[1:]))
    ]


class Model:
    """
    Optional CNN backbone + feature normalizer, then a KAN or MLP head

    Parameter paths: backbone.*, feat_norm.*, head.{l}.*
    """

    def __init__(
        self,
        kind: str,
        num_classes: int,
        input_shape: Tuple[int, int, int],
        head: List[Layer],
        backbone: Optional[CnnBackbone] = None,
        feat_norm: Optional[FeatureNormalizer] = None,
    ):
        self.kind = kind
        self.num_classes = num_classes
        self.input_shape = tuple(input_shape)
        self.backbone = backbone
        self.feat_norm = feat_norm
        self.head = head
        self.registry: Dict[str, Parameter] = dict(self.named_parameters())

    @property
    def is_hybrid(self) -> bool:
        return self.backbone is not None

    @property
    def head_type(self) -> str:
        return "kan" if isinstance(self.head[0], KanLayer) else "mlp"

    @property
    def kan_layers(self) -> List[KanLayer]:
        return [layer for layer in self.head if isinstance(layer, KanLayer)]

    @property
    def head_in_dim(self) -> int:
        return self.head[0].in_dim

    def named_parameters(self) -> Iterable[Tuple[str, Parameter]]:
        if self.backbone is not None:
            yield from self.backbone.named_parameters("backbone.")
        if self.feat_norm is not None:
            yield from self.feat_norm.named_parameters("feat_norm.")
        for idx, layer in enumerate(self.head):
            yield from layer.named_parameters(f"head.{idx}.")

    def param_count(self, prefix: str = "") -> int:
        return sum(p.value.size for path, p in self.registry.items() if path.startswith(prefix))

    def select(self, patterns) -> List[str]:
        """Registry paths matching glob pattern(s) or a predicate"""
        keep = path_filter(patterns)
        return [path for path in self.registry if keep is None or keep(path)]

    def snapshot(self, paths: Optional[Iterable[str]] = None) -> Dict[str, np.ndarray]:
        paths = self.registry.keys() if paths is None else paths
        return {path: self.registry[path].value.copy() for path in paths}

    def load_state(self, values: Mapping[str, np.ndarray]) -> None:
        for path, value in values.items():
            if path not in self.registry:
                raise ContractViolation(f"unknown parameter path '{path}'")
            if value.shape != self.registry[path].shape:
                raise ContractViolation(
                    f"shape mismatch for '{path}'",
                    {"stored": list(value.shape), "live": list(self.registry[path].shape)},
                )
            self.registry[path].value = np.array(value, dtype=np.float64)

    def features(self, x: np.ndarray, check_domain: bool = True) -> Tuple[np.ndarray, dict]:
        """Head input: flattened pixels (pure) or tanh(LayerNorm(backbone(x))) (hybrid)"""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape and x.shape[1:] != (int(np.prod(self.input_shape)),):
            raise DimensionError(
                f"model expects inputs shaped {list(self.input_shape)}, got {list(x.shape[1:])}"
            )
        cache: dict = {}
        if not self.is_hybrid:
            return x.reshape(x.shape[0], -1), cache
        z, cache["backbone"] = self.backbone.forward(x.reshape((x.shape[0],) + self.input_shape))
        h, cache["feat_norm"] = self.feat_norm.forward(z)
        if check_domain and self.head_type == "kan" and h.size:
            finite = bool(np.all(np.isfinite(h)))
            if not finite or np.max(np.abs(h)) >= 1.0:
                raise ContractViolation(
                    "head input left the open spline domain (-1, 1)",
                    {"finite": finite, "max_abs": float(np.max(np.abs(h))) if finite else None},
                )
        return h, cache

    def head_forward(self, h: np.ndarray) -> Tuple[np.ndarray, List[dict]]:
        caches = []
        for layer in self.head:
            h, c = layer.forward(h)
            caches.append(c)
        return h, caches

    def forward(self, x: np.ndarray, check_domain: bool = True) -> Tuple[np.ndarray, dict]:
        h, cache = self.features(x, check_domain)
        logits, cache["head"] = self.head_forward(h)
        return logits, cache

    def backward(
        self,
        cache: dict,
        dlogits: np.ndarray,
        collect: str = "grad",
        wanted: Union[str, Sequence[str], PathFilter, None] = None,
    ) -> Dict[str, np.ndarray]:
        """
        Back-propagate from the logits, stopping once no earlier parameter is wanted

        Args:
            cache: from forward
            dlogits: [batch, C] upstream gradient
            collect: "grad", "square" or "sample" (see nn.base)
            wanted: path filter; None means every parameter

        Returns:
            Dict[str, np.ndarray]: per-path results for the wanted parameters
        """
        keep = path_filter(wanted)
        out: Dict[str, np.ndarray] = {}
        needs = [layer.wants_any(f"head.{i}.", keep) for i, layer in enumerate(self.head)]
        body_needed = self.is_hybrid and (
            self.backbone.wants_any("backbone.", keep) or self.feat_norm.wants_any("feat_norm.", keep)
        )
        g = dlogits
        for idx in reversed(range(len(self.head))):
            earlier = any(needs[:idx]) or body_needed
            if not needs[idx] and not earlier:
                break
            g, grads = self.head[idx].backward(
                cache["head"][idx], g, collect, f"head.{idx}.", keep, need_input_grad=earlier
            )
            out.update(grads)
            if not earlier:
                return out
        if not body_needed:
            return out
        g, grads = self.feat_norm.backward(cache["feat_norm"], g, collect, "feat_norm.", keep)
        out.update(grads)
        if self.backbone.wants_any("backbone.", keep):
            _, grads = self.backbone.backward(cache["backbone"], g, collect, "backbone.", keep, need_input_grad=False)
            out.update(grads)
        return out

    def zero_grad(self) -> None:
        for param in self.registry.values():
            param.zero_grad()


def build_model(spec: Union[ModelSpec, Mapping, None]) -> Model:
    """
    Build a model from a resolved architecture spec

    Args:
        spec: ModelSpec or a mapping with its fields

    Returns:
        Model: with registry paths backbone.*, feat_norm.*, head.*
    """
    if spec is None or (isinstance(spec, Mapping) and not spec):
        raise ConfigError("empty architecture spec")
    if not isinstance(spec, ModelSpec):
        try:
            spec = ModelSpec(**dict(spec))
        except ValidationError as exc:
            raise ConfigError("invalid architecture spec", {"errors": exc.errors(include_url=False)}) from exc

    rng = Rng(spec.seed).child("model")
    channels, height, width = spec.input_shape
    hybrid = spec.kind.startswith("cnn")
    hidden = list(spec.hidden) if spec.hidden is not None else (
        DEFAULT_HYBRID_HIDDEN if hybrid else DEFAULT_PURE_HIDDEN
    )
    grid = SplineGrid(grid_intervals=spec.grid, order=spec.order)

    backbone = feat_norm = None
    if hybrid:
        backbone = CnnBackbone(
            channels,
            rng.child("backbone"),
            stem_width=spec.stem_width,
            stage_widths=spec.backbone_widths,
            feature_dim=spec.feature_dim,
        )
        feat_norm = FeatureNormalizer(spec.feature_dim)
        in_dim = spec.feature_dim
    else:
        in_dim = channels * height * width

    if spec.kind == "pure_mlp":
        hidden = match_mlp_hidden(in_dim, spec.num_classes, hidden, grid.num_basis, tolerance=0.10)

    dims = [in_dim, *hidden, spec.num_classes]
    head_rng = rng.child("head")
    if spec.kind.endswith("kan"):
        head: List[Layer] = [
            KanLayer(a, b, grid, head_rng.child(idx)) for idx, (a, b) in enumerate(zip(dims[:-1], dims[1:]))
        ]
    else:
        head = mlp_head(dims, head_rng)

    model = Model(spec.kind, spec.num_classes, spec.input_shape, head, backbone, feat_norm)
    logger.debug(f"built {spec.kind} with head dims {dims} and {model.param_count()} parameters")
    return model
