"""Parameter slots and the layer protocol shared by every network block"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, Optional, Tuple

import numpy as np

PathFilter = Callable[[str], bool]

# What a backward pass collects per parameter:
#   "grad"   - gradient of the summed upstream objective
#   "square" - sum over the batch of squared per-sample gradients
#   "sample" - per-sample gradients with a leading batch axis
COLLECT_MODES = ("grad", "square", "sample")


@dataclass
class Parameter:
    """A trainable tensor and its gradient slot"""
    value: np.ndarray
    grad: np.ndarray = field(default=None)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)


class Layer:
    """
    Base for hand-differentiated blocks

    Subclasses register parameters in `self.params` and sub-blocks in `self.children`;
    `backward` returns the input gradient plus a dict keyed by full parameter path.
    """

    def __init__(self):
        self.params: Dict[str, Parameter] = {}
        self.children: Dict[str, "Layer"] = {}

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, param in self.params.items():
            yield f"{prefix}{name}", param
        for cname, child in self.children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, dict]:
        raise NotImplementedError

    def backward(
        self,
        cache: dict,
        upstream: np.ndarray,
        collect: str = "grad",
        prefix: str = "",
        wanted: Optional[PathFilter] = None,
        need_input_grad: bool = True,
    ) -> Tuple[Optional[np.ndarray], Dict[str, np.ndarray]]:
        raise NotImplementedError

    @staticmethod
    def _wants(prefix: str, name: str, wanted: Optional[PathFilter]) -> bool:
        return wanted is None or wanted(f"{prefix}{name}")

    def wants_any(self, prefix: str, wanted: Optional[PathFilter]) -> bool:
        return any(wanted is None or wanted(path) for path, _ in self.named_parameters(prefix))
