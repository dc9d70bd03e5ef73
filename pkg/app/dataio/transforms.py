"""Deterministic task transforms: pixel permutation, rotation, class filtering"""
from typing import Iterable, Optional

import numpy as np
from scipy import ndimage

from core.errors import ConfigError
from dataio.dataset import Dataset
from numerics.rng import Rng


def pixel_permutation(num_features: int, seed: Optional[int]) -> np.ndarray:
    """Seeded permutation of flattened feature indices; seed None is the identity"""
    if seed is None:
        return np.arange(num_features)
    return Rng(seed).child("permute").permutation(num_features)


def permute_pixels(ds: Dataset, seed: Optional[int]) -> Dataset:
    if seed is None:
        return ds
    perm = pixel_permutation(ds.features.shape[1], seed)
    images = ds.features[:, perm].reshape(ds.images.shape)
    return ds.with_images(images, f"{ds.name}/perm{seed}")


def rotate_images(ds: Dataset, degrees: float, mode: str = "bilinear") -> Dataset:
    """
    Rotate every image about its center, zero-padded

    Args:
        ds: dataset
        degrees: counter-clockwise angle
        mode: "bilinear" or "nearest"
    """
    if mode not in ("bilinear", "nearest"):
        raise ConfigError(f"unknown rotation mode '{mode}'")
    if degrees == 0:
        return ds
    # Pixels equal to the background after rotation must stay at the background value
    background = -1.0 if ds.normalization.get("kind") == "unit_interval_signed" else 0.0
    rotated = ndimage.rotate(
        ds.images - background,
        angle=degrees,
        axes=(3, 2),
        reshape=False,
        order=1 if mode == "bilinear" else 0,
        mode="constant",
        cval=0.0,
        prefilter=False,
    )
    return ds.with_images(rotated + background, f"{ds.name}/rot{degrees:g}")


def filter_classes(ds: Dataset, class_set: Iterable[int], remap: bool = False) -> Dataset:
    """
    Keep examples whose label is in class_set

    Args:
        remap: relabel to 0..len(class_set)-1 in class_set order
    """
    classes = list(class_set)
    if not classes:
        raise ConfigError("empty class set")
    keep = np.isin(ds.labels, classes)
    labels = ds.labels[keep]
    num_classes = ds.num_classes
    if remap:
        lookup = {c: i for i, c in enumerate(classes)}
        labels = np.array([lookup[int(y)] for y in labels], dtype=np.int64)
        num_classes = len(classes)
    return Dataset(
        images=ds.images[keep],
        labels=labels,
        name=f"{ds.name}/classes{'-'.join(str(c) for c in classes)}",
        num_classes=num_classes,
        normalization=ds.normalization,
    )
