"""Per-knot importance, gradient masking and the importance-weighted anchor for KAN heads"""
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from cl.fisher import empirical_fisher
from core.errors import ConfigError, DimensionError
from core.logging import get_logger
from dataio.dataset import Dataset
from nn.model import Model
from numerics.rng import Rng

logger = get_logger("cl.kancl")

ACTIVATION_BATCH = 512


@dataclass
class ImportanceStore:
    """
    Accumulated per-knot importance S and coefficient anchors c* per KAN head layer

    `w_star` holds base-weight anchors when base weights are regularized too.
    """
    S: List[np.ndarray] = field(default_factory=list)
    c_star: List[np.ndarray] = field(default_factory=list)
    w_star: List[np.ndarray] = field(default_factory=list)
    tasks_seen: int = 0

    @classmethod
    def for_model(cls, model: Model) -> "ImportanceStore":
        layers = model.kan_layers
        if not layers:
            raise ConfigError(f"{model.kind} has no KAN head")
        return cls(
            S=[np.zeros(layer.spline_coeffs.shape) for layer in layers],
            c_star=[layer.spline_coeffs.value.copy() for layer in layers],
            w_star=[layer.base_weight.value.copy() for layer in layers],
        )

    def to_arrays(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {"kancl.tasks_seen": np.array(self.tasks_seen)}
        for idx, (s, c, w) in enumerate(zip(self.S, self.c_star, self.w_star)):
            out[f"kancl.S.head.{idx}.spline_coeffs"] = s
            out[f"kancl.cstar.head.{idx}.spline_coeffs"] = c
            out[f"kancl.wstar.head.{idx}.base_weight"] = w
        return out

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        self.tasks_seen = int(arrays.get("kancl.tasks_seen", 0))
        for idx in range(len(self.S)):
            self.S[idx] = np.array(arrays[f"kancl.S.head.{idx}.spline_coeffs"])
            self.c_star[idx] = np.array(arrays[f"kancl.cstar.head.{idx}.spline_coeffs"])
            self.w_star[idx] = np.array(arrays[f"kancl.wstar.head.{idx}.base_weight"])


def knot_fisher(
    model: Model,
    dataset: Dataset,
    sample_cap: Optional[int] = None,
    class_mask: Optional[np.ndarray] = None,
    model_labels: bool = False,
    rng: Optional[Rng] = None,
) -> List[np.ndarray]:
    """Per-coefficient Fisher of each KAN head layer, [out, in, K] per layer"""
    if not model.kan_layers:
        raise ConfigError(f"{model.kind} has no KAN head")
    store = empirical_fisher(
        model, dataset, "head.*.spline_coeffs", sample_cap, class_mask, model_labels, rng
    )
    return [store.fisher[f"head.{i}.spline_coeffs"] for i in range(len(model.head))]


def activation_mass(model: Model, dataset: Dataset, sample_cap: Optional[int] = None) -> List[np.ndarray]:
    """Mean |B_k(x_i)| over each KAN layer's realized inputs, [in, K] per layer"""
    if not model.kan_layers:
        raise ConfigError(f"{model.kind} has no KAN head")
    n = len(dataset) if sample_cap is None else min(len(dataset), sample_cap)
    if n == 0:
        raise DimensionError("activation mass needs a non-empty dataset")
    totals = [np.zeros((layer.in_dim, layer.num_basis)) for layer in model.kan_layers]
    for start in range(0, n, ACTIVATION_BATCH):
        _, cache = model.forward(dataset.images[start:min(start + ACTIVATION_BATCH, n)])
        for idx, layer_cache in enumerate(cache["head"]):
            totals[idx] += np.abs(layer_cache["bases"]).sum(axis=0)
    return [t / n for t in totals]


def _normalized(values: np.ndarray) -> np.ndarray:
    peak = float(np.max(values)) if values.size else 0.0
    return values / peak if peak > 0 else np.zeros_like(values)


def combine_importance(F: np.ndarray, A: np.ndarray, alpha_f: float = 1.0, alpha_a: float = 0.5) -> np.ndarray:
    """
    s = alpha_f * F / max F + alpha_a * A / max A, A broadcast over the output axis

    Args:
        F: [out, in, K] knot Fisher
        A: [in, K] activation mass

    Returns:
        np.ndarray: [out, in, K], values in [0, alpha_f + alpha_a]
    """
    if alpha_f < 0 or alpha_a < 0:
        raise ConfigError(f"importance weights must be non-negative, got alpha_f={alpha_f}, alpha_a={alpha_a}")
    if F.shape[1:] != A.shape:
        raise DimensionError(f"Fisher {list(F.shape)} and activation mass {list(A.shape)} do not line up")
    return alpha_f * _normalized(F) + alpha_a * _normalized(A)[None, :, :]


def accumulate_and_snapshot(store: ImportanceStore, scores: List[np.ndarray], model: Model) -> ImportanceStore:
    """S += s per layer, then anchor at the current coefficients"""
    layers = model.kan_layers
    if len(scores) != len(store.S) or len(layers) != len(store.S):
        raise DimensionError(f"{len(scores)} score tensors for {len(store.S)} KAN layers")
    for idx, (s, layer) in enumerate(zip(scores, layers)):
        if s.shape != store.S[idx].shape:
            raise DimensionError(f"score shape {list(s.shape)} vs store {list(store.S[idx].shape)}")
        if np.any(s < 0):
            raise ConfigError("importance scores must be non-negative")
        store.S[idx] = store.S[idx] + s
        store.c_star[idx] = layer.spline_coeffs.value.copy()
        store.w_star[idx] = layer.base_weight.value.copy()
    store.tasks_seen += 1
    return store


def mask_gradient(grads: np.ndarray, S: np.ndarray, beta: float) -> np.ndarray:
    """grad * exp(-beta * S)"""
    if beta < 0:
        raise ConfigError(f"beta must be non-negative, got {beta}")
    return grads * np.exp(-beta * S)


def edge_importance(S: np.ndarray) -> np.ndarray:
    """Base-weight importance: mean of S over the knot axis, [out, in]"""
    return S.mean(axis=-1)


def anchor_penalty(
    coeffs: List[np.ndarray],
    store: ImportanceStore,
    lam: float,
    base_weights: Optional[List[np.ndarray]] = None,
) -> Tuple[float, List[np.ndarray], Optional[List[np.ndarray]]]:
    """
    lam * sum S * (c - c*)^2 over every KAN layer

    Args:
        coeffs: live spline coefficients per layer
        store: importance store
        lam: effective anchor strength (annealed in replay mode)
        base_weights: live base weights, to anchor them with per-edge importance

    Returns:
        (value, coefficient grads, base-weight grads or None)
    """
    if len(coeffs) != len(store.S):
        raise DimensionError(f"{len(coeffs)} coefficient tensors for {len(store.S)} KAN layers")
    value = 0.0
    c_grads: List[np.ndarray] = []
    for c, S, c_star in zip(coeffs, store.S, store.c_star):
        diff = c - c_star
        value += lam * float(np.sum(S * diff * diff))
        c_grads.append(2.0 * lam * S * diff)
    w_grads = None
    if base_weights is not None:
        w_grads = []
        for w, S, w_star in zip(base_weights, store.S, store.w_star):
            weight = edge_importance(S)
            diff = w - w_star
            value += lam * float(np.sum(weight * diff * diff))
            w_grads.append(2.0 * lam * weight * diff)
    return value, c_grads, w_grads


def anneal_scale(rho: float, delta: float, progress: float) -> float:
    """rho * max(0, 1 - delta * progress)"""
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"rho must lie in [0, 1], got {rho}")
    if delta < 0:
        raise ConfigError(f"delta must be non-negative, got {delta}")
    return rho * max(0.0, 1.0 - delta * float(np.clip(progress, 0.0, 1.0)))
