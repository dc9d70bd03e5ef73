"""Adam with moment state keyed by parameter path"""
from typing import Dict, Mapping, MutableMapping, Tuple

import numpy as np

from core.errors import DimensionError, NonFiniteError
from nn.base import Parameter


def adam_step(
    registry: Mapping[str, Parameter],
    grads: Mapping[str, np.ndarray],
    m: MutableMapping[str, np.ndarray],
    v: MutableMapping[str, np.ndarray],
    step: int,
    lr: float = 1e-3,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> Dict[str, np.ndarray]:
    """
    One bias-corrected Adam update of every parameter in `grads`

    Args:
        registry: live parameters, updated in place
        grads: gradient per path
        m, v: first/second moments per path, updated in place
        step: 1-based update count

    Returns:
        Dict[str, np.ndarray]: parameter change per path
    """
    b1, b2 = betas
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    deltas: Dict[str, np.ndarray] = {}
    for path, g in grads.items():
        param = registry[path]
        if g.shape != param.shape:
            raise DimensionError(f"gradient for '{path}' has shape {list(g.shape)}, expected {list(param.shape)}")
        m_prev = m.get(path)
        v_prev = v.get(path)
        m[path] = (1.0 - b1) * g if m_prev is None else b1 * m_prev + (1.0 - b1) * g
        v[path] = (1.0 - b2) * g * g if v_prev is None else b2 * v_prev + (1.0 - b2) * g * g
        delta = -lr * (m[path] / c1) / (np.sqrt(v[path] / c2) + eps)
        param.value = param.value + delta
        deltas[path] = delta
    return deltas


class Adam:
    """Standard Adam with bias correction"""

    def __init__(self, lr: float = 1e-3, betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.reset()

    def reset(self) -> None:
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.step_count = 0

    def step(self, registry: Mapping[str, Parameter], grads: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """
        Apply one update to every parameter that has a gradient

        Returns:
            Dict[str, np.ndarray]: parameter change per path (used by SI)
        """
        bad = [path for path, g in grads.items() if not np.all(np.isfinite(g))]
        if bad:
            raise NonFiniteError("non-finite gradient", {"paths": bad, "step": self.step_count})
        self.step_count += 1
        return adam_step(registry, grads, self.m, self.v, self.step_count, self.lr, self.betas, self.eps)
