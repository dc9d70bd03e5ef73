"""LayerNorm followed by tanh, mapping backbone features into the spline domain"""
from typing import Dict, Optional, Tuple

import numpy as np

from core.errors import ContractViolation, DimensionError
from nn.base import Layer, Parameter, PathFilter

# Largest float64 below 1; tanh rounds to exactly 1.0 past about 19.06
_OPEN_BOUND = np.nextafter(1.0, 0.0)


class FeatureNormalizer(Layer):
    """y = tanh(gamma * (z - mean) / sqrt(var + eps) + beta), per sample"""

    def __init__(self, dim: int = 256, eps: float = 1e-5):
        super().__init__()
        self.dim = dim
        self.eps = eps
        self.params["gamma"] = Parameter(np.ones(dim))
        self.params["beta"] = Parameter(np.zeros(dim))

    def forward(self, z: np.ndarray) -> Tuple[np.ndarray, dict]:
        if z.ndim != 2 or z.shape[1] != self.dim:
            raise DimensionError(f"feature normalizer expects [batch, {self.dim}], got {list(z.shape)}")
        mu = z.mean(axis=1, keepdims=True)
        var = z.var(axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (z - mu) * inv_std
        y = np.clip(
            np.tanh(self.params["gamma"].value * xhat + self.params["beta"].value), -_OPEN_BOUND, _OPEN_BOUND
        )
        return y, {"xhat": xhat, "inv_std": inv_std, "y": y}

    def backward(
        self,
        cache: dict,
        upstream: np.ndarray,
        collect: str = "grad",
        prefix: str = "",
        wanted: Optional[PathFilter] = None,
        need_input_grad: bool = True,
    ) -> Tuple[Optional[np.ndarray], Dict[str, np.ndarray]]:
        xhat, y = cache["xhat"], cache["y"]
        if upstream.shape != xhat.shape:
            raise ContractViolation(
                "stale feature-normalizer cache",
                {"upstream": list(upstream.shape), "expected": list(xhat.shape)},
            )
        du = upstream * (1.0 - y ** 2)
        out: Dict[str, np.ndarray] = {}
        if self._wants(prefix, "gamma", wanted):
            per = du * xhat
            out[f"{prefix}gamma"] = {"grad": per.sum(axis=0), "square": (per ** 2).sum(axis=0), "sample": per}[collect]
        if self._wants(prefix, "beta", wanted):
            out[f"{prefix}beta"] = {"grad": du.sum(axis=0), "square": (du ** 2).sum(axis=0), "sample": du}[collect]
        dx = None
        if need_input_grad:
            dxhat = du * self.params["gamma"].value
            dx = cache["inv_std"] * (
                dxhat
                - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
            )
        return dx, out
