"""Reservoir replay buffer"""
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from core.errors import BufferEmptyError, ConfigError, ContractViolation
from numerics.rng import Rng


class ReplayBuffer:
    """Fixed-capacity reservoir of (input, label, task id) triples"""

    def __init__(self, capacity: int, rng: Rng):
        if capacity < 0:
            raise ConfigError(f"buffer capacity must be non-negative, got {capacity}")
        self.capacity = capacity
        self.rng = rng
        self.seen = 0
        self.size = 0
        self._images: Optional[np.ndarray] = None
        self._labels = np.zeros(capacity, dtype=np.int64)
        self._task_ids = np.zeros(capacity, dtype=np.int64)

    def __len__(self) -> int:
        return self.size

    @property
    def images(self) -> np.ndarray:
        if self._images is None:
            return np.zeros((0,))
        return self._images[: self.size]

    @property
    def labels(self) -> np.ndarray:
        return self._labels[: self.size]

    @property
    def task_ids(self) -> np.ndarray:
        return self._task_ids[: self.size]

    def _slot(self) -> int:
        """Reservoir rule: index to write, or -1 to drop"""
        self.seen += 1
        if self.size < self.capacity:
            self.size += 1
            return self.size - 1
        j = int(self.rng.integers(0, self.seen))
        return j if j < self.capacity else -1

    def insert(self, image: np.ndarray, label: int, task_id: int) -> None:
        if self.capacity == 0:
            self.seen += 1
            return
        image = np.asarray(image, dtype=np.float64)
        if self._images is None:
            self._images = np.zeros((self.capacity,) + image.shape)
        slot = self._slot()
        if slot < 0:
            return
        self._images[slot] = image
        self._labels[slot] = label
        self._task_ids[slot] = task_id

    def insert_many(self, images: np.ndarray, labels: np.ndarray, task_id: int) -> None:
        for image, label in zip(images, labels):
            self.insert(image, int(label), task_id)

    def sample(self, n: int, rng: Rng) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Uniform draw without replacement

        Returns:
            (images, labels, task ids); empty arrays when n == 0
        """
        if n == 0:
            shape = (0,) + (self._images.shape[1:] if self._images is not None else ())
            return np.zeros(shape), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        if self.size == 0:
            raise BufferEmptyError("cannot sample from an empty replay buffer")
        if n > self.size:
            raise ContractViolation(f"requested {n} replay examples but the buffer holds {self.size}")
        index = np.sort(rng.choice(self.size, n, replace=False))
        return self._images[index], self._labels[index], self._task_ids[index]

    def to_arrays(self) -> Dict[str, np.ndarray]:
        out = {
            "replay.seen": np.array(self.seen),
            "replay.labels": self.labels.copy(),
            "replay.task_ids": self.task_ids.copy(),
        }
        if self._images is not None:
            out["replay.images"] = self.images.copy()
        return out

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        self.seen = int(arrays.get("replay.seen", 0))
        labels = np.asarray(arrays.get("replay.labels", np.zeros(0)), dtype=np.int64)
        self.size = int(labels.shape[0])
        self._labels[: self.size] = labels
        self._task_ids[: self.size] = np.asarray(arrays.get("replay.task_ids", np.zeros(0)), dtype=np.int64)
        if "replay.images" in arrays and self.size:
            stored = np.asarray(arrays["replay.images"], dtype=np.float64)
            self._images = np.zeros((self.capacity,) + stored.shape[1:])
            self._images[: self.size] = stored
