"""Empirical Fisher, (online) EWC and the Fisher-overlap summary"""
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigError, ContractViolation, DimensionError
from core.logging import get_logger
from dataio.dataset import Dataset
from nn.base import Parameter
from nn.losses import log_likelihood_grad, sample_model_labels
from nn.model import Model, path_filter
from numerics.rng import Rng

logger = get_logger("cl.fisher")

FISHER_BATCH = 256


@dataclass
class FisherStore:
    """Diagonal Fisher per path and the parameter snapshot it anchors to"""
    fisher: Dict[str, np.ndarray] = field(default_factory=dict)
    theta: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def paths(self) -> List[str]:
        return list(self.fisher)

    def __bool__(self) -> bool:
        return bool(self.fisher)

    def to_arrays(self, prefix: str = "ewc.") -> Dict[str, np.ndarray]:
        out = {f"{prefix}F.{p}": v for p, v in self.fisher.items()}
        out.update({f"{prefix}theta.{p}": v for p, v in self.theta.items()})
        return out

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], prefix: str = "ewc.") -> "FisherStore":
        f_key, t_key = f"{prefix}F.", f"{prefix}theta."
        return cls(
            fisher={k[len(f_key):]: np.array(v) for k, v in arrays.items() if k.startswith(f_key)},
            theta={k[len(t_key):]: np.array(v) for k, v in arrays.items() if k.startswith(t_key)},
        )


def empirical_fisher(
    model: Model,
    dataset: Dataset,
    patterns,
    sample_cap: Optional[int] = None,
    class_mask: Optional[np.ndarray] = None,
    model_labels: bool = False,
    rng: Optional[Rng] = None,
) -> FisherStore:
    """
    Mean squared per-sample gradient of log p(y | x) over the first min(N, sample_cap) samples

    Args:
        model: network at its current parameters
        dataset: task data
        patterns: glob pattern(s) or predicate selecting parameter paths
        sample_cap: None for the whole set
        class_mask: Task-IL class set (bool [C]) applied to the softmax
        model_labels: draw y from the model instead of using the true label
        rng: required when model_labels is set

    Returns:
        FisherStore: with theta set to the current parameters
    """
    paths = model.select(patterns)
    if not paths:
        raise ConfigError(f"parameter filter {patterns!r} matches nothing in a {model.kind} model")
    n = len(dataset) if sample_cap is None else min(len(dataset), sample_cap)
    if n == 0:
        raise DimensionError("empirical Fisher needs a non-empty dataset")
    if model_labels and rng is None:
        raise ConfigError("model-sampled Fisher labels need an rng")
    keep = path_filter(paths)
    totals = {p: np.zeros_like(model.registry[p].value) for p in paths}
    for start in range(0, n, FISHER_BATCH):
        stop = min(start + FISHER_BATCH, n)
        logits, cache = model.forward(dataset.images[start:stop])
        labels = dataset.labels[start:stop]
        if model_labels:
            labels = sample_model_labels(logits, rng.child("fisher_labels", start), class_mask)
        upstream = log_likelihood_grad(logits, labels, class_mask)
        squares = model.backward(cache, upstream, collect="square", wanted=keep)
        for p in paths:
            totals[p] += squares[p]
    return FisherStore(
        fisher={p: v / n for p, v in totals.items()},
        theta=model.snapshot(paths),
    )


def _check_paths(registry: Mapping[str, Parameter], store_paths: Sequence[str], snapshot: Mapping) -> None:
    missing = [p for p in store_paths if p not in registry or p not in snapshot]
    if missing:
        raise ContractViolation("importance store and registry disagree on paths", {"paths": missing})
    bad = [p for p in store_paths if registry[p].shape != snapshot[p].shape]
    if bad:
        raise ContractViolation("snapshot shapes differ from live parameters", {"paths": bad})


def quadratic_penalty(
    registry: Mapping[str, Parameter],
    importance: Mapping[str, np.ndarray],
    anchor: Mapping[str, np.ndarray],
    lam: float,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """lam * sum importance * (theta - anchor)^2 and its gradient"""
    _check_paths(registry, list(importance), anchor)
    value = 0.0
    grads: Dict[str, np.ndarray] = {}
    for path, weight in importance.items():
        diff = registry[path].value - anchor[path]
        value += lam * float(np.sum(weight * diff * diff))
        grads[path] = 2.0 * lam * weight * diff
    return value, grads


def ewc_penalty(
    registry: Mapping[str, Parameter], store: FisherStore, lam: float
) -> Tuple[float, Dict[str, np.ndarray]]:
    if not store:
        return 0.0, {}
    return quadratic_penalty(registry, store.fisher, store.theta, lam)


def online_fisher_update(
    store: Optional[FisherStore], new: FisherStore, gamma: float = 1.0
) -> FisherStore:
    """F <- gamma * F_old + F_new; the snapshot moves to the newest parameters"""
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"gamma must lie in [0, 1], got {gamma}")
    if not store:
        return FisherStore({p: v.copy() for p, v in new.fisher.items()}, dict(new.theta))
    fisher = {}
    for path, value in new.fisher.items():
        old = store.fisher.get(path)
        fisher[path] = value.copy() if old is None else gamma * old + value
    return FisherStore(fisher=fisher, theta=dict(new.theta))


def fisher_overlap(fishers: Sequence[Mapping[str, np.ndarray]], paths: Optional[Sequence[str]] = None) -> np.ndarray:
    """
    Pairwise cosine similarity of flattened Fisher diagonals

    Returns:
        np.ndarray: [T, T]; NaN where either Fisher has zero norm
    """
    if len(fishers) < 2:
        raise DimensionError("fisher overlap needs at least two tasks")
    paths = list(paths) if paths is not None else sorted(fishers[0])
    for f in fishers:
        if any(p not in f for p in paths):
            raise ContractViolation("task Fishers are keyed by different paths")
    flat = [np.concatenate([np.ravel(f[p]) for p in paths]) for f in fishers]
    norms = [float(np.linalg.norm(v)) for v in flat]
    T = len(flat)
    out = np.full((T, T), np.nan)
    for a in range(T):
        for b in range(T):
            if norms[a] > 0 and norms[b] > 0:
                out[a, b] = 1.0 if a == b else float(flat[a] @ flat[b]) / (norms[a] * norms[b])
    return out
