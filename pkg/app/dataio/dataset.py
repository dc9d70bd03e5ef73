"""In-memory labelled image set"""
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from core.errors import DimensionError


@dataclass(frozen=True)
class Dataset:
    """
    Images [N, C, H, W] (float64) with integer labels [N]

    `normalization` records how pixels were mapped ("unit_interval_signed" for
    [-1, 1] scaling, "channel_standardized" with the mean/std used).
    """
    images: np.ndarray
    labels: np.ndarray
    name: str = ""
    num_classes: int = 0
    normalization: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        images = np.ascontiguousarray(self.images, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if images.ndim != 4:
            raise DimensionError(f"images must be [N, C, H, W], got {list(images.shape)}")
        if labels.shape != (images.shape[0],):
            raise DimensionError(f"{images.shape[0]} images but {labels.shape[0]} labels")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)
        if self.num_classes == 0 and labels.size:
            object.__setattr__(self, "num_classes", int(labels.max()) + 1)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    @property
    def features(self) -> np.ndarray:
        """Flattened [N, C*H*W] view"""
        return self.images.reshape(len(self), -1)

    def subset(self, index: np.ndarray, name: str = None) -> "Dataset":
        return Dataset(
            images=self.images[index],
            labels=self.labels[index],
            name=name or self.name,
            num_classes=self.num_classes,
            normalization=self.normalization,
        )

    def head(self, n: int) -> "Dataset":
        return self if n is None or n >= len(self) else self.subset(np.arange(n))

    def with_images(self, images: np.ndarray, name: str) -> "Dataset":
        return Dataset(images, self.labels, name, self.num_classes, self.normalization)

    def class_counts(self) -> Dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}
