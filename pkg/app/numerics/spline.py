"""Uniform-grid B-spline basis and the SiLU base function"""
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy.special import expit

from core.errors import ConfigError, IndexOutOfRange


@dataclass(frozen=True)
class SplineGrid:
    """
    Uniform knot layout shared by every edge of a KAN layer

    G interior intervals on [domain_lo, domain_hi] plus `order` padding knots on each
    side at the same spacing, giving G + 2*order + 1 knots and K = G + order bases.
    """
    grid_intervals: int = 5
    order: int = 3
    domain_lo: float = -1.0
    domain_hi: float = 1.0
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.grid_intervals < 1:
            raise ConfigError(f"grid_intervals must be positive, got {self.grid_intervals}")
        if self.order < 0:
            raise ConfigError(f"order must be non-negative, got {self.order}")
        if not self.domain_lo < self.domain_hi:
            raise ConfigError(f"domain_lo must be below domain_hi, got [{self.domain_lo}, {self.domain_hi}]")
        steps = np.arange(-self.order, self.grid_intervals + self.order + 1, dtype=np.float64)
        knots = self.domain_lo + steps * self.spacing
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def spacing(self) -> float:
        return (self.domain_hi - self.domain_lo) / self.grid_intervals

    @property
    def num_basis(self) -> int:
        return self.grid_intervals + self.order

    def clamp(self, x: np.ndarray) -> np.ndarray:
        """Clamp into the domain; order 0 has no basis starting at domain_hi"""
        hi = self.domain_hi if self.order > 0 else np.nextafter(self.domain_hi, -np.inf)
        return np.clip(x, self.domain_lo, hi)


def _cox_de_boor(knots: np.ndarray, x: np.ndarray, order: int) -> np.ndarray:
    """All bases of the given order at x, shape x.shape + (len(knots) - 1 - order,)"""
    t = knots
    xe = x[..., None]
    bases = ((xe >= t[:-1]) & (xe < t[1:])).astype(np.float64)
    for p in range(1, order + 1):
        left = (xe - t[:-(p + 1)]) / (t[p:-1] - t[:-(p + 1)]) * bases[..., :-1]
        right = (t[p + 1:] - xe) / (t[p + 1:] - t[1:-p]) * bases[..., 1:]
        bases = left + right
    return bases


def basis_eval(grid: SplineGrid, x) -> np.ndarray:
    """
    Evaluate all K bases

    Args:
        grid: spline grid
        x: scalar or array; values outside the domain are clamped first

    Returns:
        np.ndarray: shape x.shape + (K,), non-negative, at most order+1 nonzero per point
    """
    xc = grid.clamp(np.asarray(x, dtype=np.float64))
    return _cox_de_boor(grid.knots, xc, grid.order)


def basis_eval_with_derivative(grid: SplineGrid, x) -> Tuple[np.ndarray, np.ndarray]:
    """
    Bases and their derivative with respect to the clamped input

    Returns:
        (bases, dbases): both shape x.shape + (K,); dbases is zero for order 0
    """
    xc = grid.clamp(np.asarray(x, dtype=np.float64))
    bases = _cox_de_boor(grid.knots, xc, grid.order)
    d = grid.order
    if d == 0:
        return bases, np.zeros_like(bases)
    t = grid.knots
    lower = _cox_de_boor(t, xc, d - 1)
    dbases = d * (
        lower[..., :-1] / (t[d:-1] - t[:-(d + 1)])
        - lower[..., 1:] / (t[d + 1:] - t[1:-d])
    )
    return bases, dbases


def basis_support(grid: SplineGrid, k: int) -> Tuple[float, float]:
    """Support interval [t_k, t_{k+d+1}] of basis k"""
    if not 0 <= k < grid.num_basis:
        raise IndexOutOfRange(f"basis index {k} outside [0, {grid.num_basis})")
    return float(grid.knots[k]), float(grid.knots[k + grid.order + 1])


def silu(x):
    """x * sigmoid(x)"""
    x = np.asarray(x, dtype=np.float64)
    return x * expit(x)


def silu_grad(x):
    x = np.asarray(x, dtype=np.float64)
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))
