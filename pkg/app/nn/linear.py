"""Fully connected layer with tanh / relu / identity activation"""
from typing import Dict, Optional, Tuple

import numpy as np

from core.errors import ConfigError, ContractViolation, DimensionError
from nn.base import Layer, Parameter, PathFilter
from numerics.rng import Rng

ACTIVATIONS = ("tanh", "relu", "identity")


class MlpLayer(Layer):
    """y = act(x W^T + b)"""

    def __init__(self, in_dim: int, out_dim: int, rng: Rng, activation: str = "tanh", init_scale: Optional[float] = None):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation '{activation}'", {"allowed": list(ACTIVATIONS)})
        if in_dim < 1 or out_dim < 1:
            raise DimensionError(f"MLP layer dims must be positive, got {in_dim}->{out_dim}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        scale = init_scale if init_scale is not None else 1.0 / np.sqrt(in_dim)
        self.params["weight"] = Parameter(rng.child("weight").normal((out_dim, in_dim), scale=scale))
        self.params["bias"] = Parameter(np.zeros(out_dim))

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return np.tanh(z)
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        return z

    def _act_grad(self, z: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return 1.0 - y ** 2
        if self.activation == "relu":
            return (z > 0.0).astype(np.float64)
        return np.ones_like(z)

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, dict]:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError(f"MLP layer expects [batch, {self.in_dim}], got {list(x.shape)}")
        z = x @ self.params["weight"].value.T + self.params["bias"].value
        y = self._act(z)
        return y, {"x": x, "z": z, "y": y}

    def backward(
        self,
        cache: dict,
        upstream: np.ndarray,
        collect: str = "grad",
        prefix: str = "",
        wanted: Optional[PathFilter] = None,
        need_input_grad: bool = True,
    ) -> Tuple[Optional[np.ndarray], Dict[str, np.ndarray]]:
        x = cache["x"]
        if upstream.shape != (x.shape[0], self.out_dim):
            raise ContractViolation(
                "stale MLP cache: upstream shape does not match",
                {"upstream": list(upstream.shape), "expected": [x.shape[0], self.out_dim]},
            )
        dz = upstream * self._act_grad(cache["z"], cache["y"])
        out: Dict[str, np.ndarray] = {}
        if self._wants(prefix, "weight", wanted):
            if collect == "grad":
                out[f"{prefix}weight"] = dz.T @ x
            elif collect == "square":
                out[f"{prefix}weight"] = (dz ** 2).T @ (x ** 2)
            else:
                out[f"{prefix}weight"] = np.einsum("bo,bi->boi", dz, x)
        if self._wants(prefix, "bias", wanted):
            if collect == "grad":
                out[f"{prefix}bias"] = dz.sum(axis=0)
            elif collect == "square":
                out[f"{prefix}bias"] = (dz ** 2).sum(axis=0)
            else:
                out[f"{prefix}bias"] = dz.copy()
        dx = dz @ self.params["weight"].value if need_input_grad else None
        return dx, out
