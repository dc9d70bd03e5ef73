"""KAN layer: phi_ij(x) = w_ij^b silu(x_i) + sum_k c_ijk B_k(x_i)"""
from typing import Dict, Optional, Tuple

import numpy as np

from core.errors import ContractViolation, DimensionError
from nn.base import Layer, Parameter, PathFilter
from numerics.rng import Rng
from numerics.spline import SplineGrid, basis_eval_with_derivative, silu, silu_grad


class KanLayer(Layer):
    """Dense KAN layer with shared spline grid"""

    def __init__(self, in_dim: int, out_dim: int, grid: SplineGrid, rng: Rng):
        super().__init__()
        if in_dim < 1 or out_dim < 1:
            raise DimensionError(f"KAN layer dims must be positive, got {in_dim}->{out_dim}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.grid = grid
        K = grid.num_basis
        self.params["base_weight"] = Parameter(
            rng.child("base_weight").normal((out_dim, in_dim), scale=1.0 / np.sqrt(in_dim))
        )
        self.params["spline_coeffs"] = Parameter(
            rng.child("spline_coeffs").normal((out_dim, in_dim, K), scale=0.1 / np.sqrt(grid.order + 1))
        )

    @property
    def base_weight(self) -> Parameter:
        return self.params["base_weight"]

    @property
    def spline_coeffs(self) -> Parameter:
        return self.params["spline_coeffs"]

    @property
    def num_basis(self) -> int:
        return self.grid.num_basis

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, dict]:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError(
                f"KAN layer expects [batch, {self.in_dim}], got {list(x.shape)}"
            )
        B = x.shape[0]
        bases, dbases = basis_eval_with_derivative(self.grid, x)
        s = silu(x)
        wb = self.base_weight.value
        c = self.spline_coeffs.value
        y = s @ wb.T + bases.reshape(B, -1) @ c.reshape(self.out_dim, -1).T
        cache = {
            "x": x,
            "silu": s,
            "bases": bases,
            "dbases": dbases,
            "in_domain": (x >= self.grid.domain_lo) & (x <= self.grid.domain_hi),
        }
        return y, cache

    def backward(
        self,
        cache: dict,
        upstream: np.ndarray,
        collect: str = "grad",
        prefix: str = "",
        wanted: Optional[PathFilter] = None,
        need_input_grad: bool = True,
    ) -> Tuple[Optional[np.ndarray], Dict[str, np.ndarray]]:
        bases = cache["bases"]
        B = bases.shape[0]
        if upstream.shape != (B, self.out_dim) or bases.shape[1:] != (self.in_dim, self.num_basis):
            raise ContractViolation(
                "stale KAN cache: upstream/cache shapes do not match this layer",
                {"upstream": list(upstream.shape), "bases": list(bases.shape)},
            )
        s = cache["silu"]
        flat_bases = bases.reshape(B, -1)
        out: Dict[str, np.ndarray] = {}

        if self._wants(prefix, "base_weight", wanted):
            if collect == "grad":
                out[f"{prefix}base_weight"] = upstream.T @ s
            elif collect == "square":
                out[f"{prefix}base_weight"] = (upstream ** 2).T @ (s ** 2)
            else:
                out[f"{prefix}base_weight"] = np.einsum("bo,bi->boi", upstream, s)

        if self._wants(prefix, "spline_coeffs", wanted):
            shape = self.spline_coeffs.shape
            if collect == "grad":
                out[f"{prefix}spline_coeffs"] = (upstream.T @ flat_bases).reshape(shape)
            elif collect == "square":
                out[f"{prefix}spline_coeffs"] = ((upstream ** 2).T @ (flat_bases ** 2)).reshape(shape)
            else:
                out[f"{prefix}spline_coeffs"] = np.einsum("bo,bik->boik", upstream, bases)

        dx = None
        if need_input_grad:
            c = self.spline_coeffs.value
            spline_part = (upstream @ c.reshape(self.out_dim, -1)).reshape(bases.shape)
            spline_dx = np.where(cache["in_domain"], (spline_part * cache["dbases"]).sum(axis=-1), 0.0)
            dx = silu_grad(cache["x"]) * (upstream @ self.base_weight.value) + spline_dx
        return dx, out
