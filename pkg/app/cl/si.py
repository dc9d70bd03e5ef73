"""Synaptic Intelligence: path-integral importance"""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from cl.fisher import quadratic_penalty
from core.errors import ConfigError
from nn.base import Parameter


@dataclass
class SiState:
    """
    omega: running credit since the last consolidation
    big_omega: consolidated importance
    theta: parameters at the last consolidation
    """
    xi: float = 0.1
    omega: Dict[str, np.ndarray] = field(default_factory=dict)
    big_omega: Dict[str, np.ndarray] = field(default_factory=dict)
    theta: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.xi <= 0:
            raise ConfigError(f"SI damping xi must be positive, got {self.xi}")

    def start(self, registry: Mapping[str, Parameter]) -> None:
        """Take the first reference point if none exists"""
        if not self.theta:
            self.theta = {p: param.value.copy() for p, param in registry.items()}
            self.omega = {p: np.zeros_like(v) for p, v in self.theta.items()}
            self.big_omega = {p: np.zeros_like(v) for p, v in self.theta.items()}

    def to_arrays(self) -> Dict[str, np.ndarray]:
        out = {f"si.omega.{p}": v for p, v in self.omega.items()}
        out.update({f"si.omega_total.{p}": v for p, v in self.big_omega.items()})
        out.update({f"si.theta.{p}": v for p, v in self.theta.items()})
        return out

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for attr, key in (("omega", "si.omega."), ("big_omega", "si.omega_total."), ("theta", "si.theta.")):
            setattr(self, attr, {k[len(key):]: np.array(v) for k, v in arrays.items() if k.startswith(key)})


def si_accumulate(state: SiState, grads: Mapping[str, np.ndarray], deltas: Mapping[str, np.ndarray]) -> SiState:
    """omega += -grad * delta_theta for every stepped parameter"""
    for path, delta in deltas.items():
        g = grads.get(path)
        if g is None:
            continue
        state.omega[path] = state.omega.get(path, np.zeros_like(delta)) - g * delta
    return state


def si_consolidate(state: SiState, registry: Mapping[str, Parameter], xi: float = None) -> SiState:
    """Omega += omega / (total movement^2 + xi); reset omega and the reference point"""
    xi = state.xi if xi is None else xi
    if xi <= 0:
        raise ConfigError(f"SI damping xi must be positive, got {xi}")
    for path, param in registry.items():
        ref = state.theta.get(path)
        if ref is None:
            continue
        moved = param.value - ref
        credit = state.omega.get(path, np.zeros_like(moved))
        state.big_omega[path] = state.big_omega.get(path, np.zeros_like(moved)) + np.maximum(
            credit / (moved * moved + xi), 0.0
        )
        state.omega[path] = np.zeros_like(moved)
        state.theta[path] = param.value.copy()
    return state


def si_penalty(registry: Mapping[str, Parameter], state: SiState, lam: float) -> Tuple[float, Dict[str, np.ndarray]]:
    if not state.big_omega:
        return 0.0, {}
    return quadratic_penalty(registry, state.big_omega, state.theta, lam)
