"""CIFAR-10 / CIFAR-100 binary batch reader"""
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from core.errors import DimensionError, ParseError
from core.logging import get_logger
from dataio.dataset import Dataset

logger = get_logger("dataio.cifar")

PIXELS = 3 * 32 * 32
LABEL_BYTES = {"c10": 1, "c100": 2}
CLASS_COUNT = {"c10": 10, "c100": 100}


def read_cifar_records(path: Union[str, Path], variant: str):
    """
    Raw records of one binary batch file

    Returns:
        (pixels uint8 [N, 3, 32, 32], labels int64 [N]); c100 uses the fine label
    """
    if variant not in LABEL_BYTES:
        raise DimensionError(f"unknown CIFAR variant '{variant}'")
    path = Path(path)
    raw = np.fromfile(path, dtype=np.uint8)
    record = LABEL_BYTES[variant] + PIXELS
    if raw.size % record:
        raise ParseError(
            f"{path}: size {raw.size} is not a multiple of the {record}-byte record",
            {"offset": raw.size - raw.size % record},
        )
    records = raw.reshape(-1, record)
    labels = records[:, LABEL_BYTES[variant] - 1].astype(np.int64)
    pixels = records[:, LABEL_BYTES[variant]:].reshape(-1, 3, 32, 32)
    return pixels, labels


def load_cifar(
    paths: Union[str, Path, Sequence[Union[str, Path]]],
    variant: str,
    name: str = None,
    stats: dict = None,
) -> Dataset:
    """
    Load and standardize CIFAR batches

    Each channel is standardized with the mean/std over every pixel of the loaded
    set, unless `stats` (e.g. from the training split) is passed.

    Args:
        paths: one batch file or a list of them
        variant: "c10" or "c100"
        name: dataset name
        stats: {"mean": [3], "std": [3]} to reuse

    Returns:
        Dataset: images [N, 3, 32, 32]
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    chunks: List[np.ndarray] = []
    label_chunks: List[np.ndarray] = []
    for p in paths:
        pixels, labels = read_cifar_records(p, variant)
        chunks.append(pixels)
        label_chunks.append(labels)
    pixels = np.concatenate(chunks).astype(np.float64) / 255.0
    labels = np.concatenate(label_chunks)
    if stats is None:
        mean = pixels.mean(axis=(0, 2, 3))
        std = pixels.std(axis=(0, 2, 3))
    else:
        mean, std = np.asarray(stats["mean"]), np.asarray(stats["std"])
    std = np.where(std > 0, std, 1.0)
    images = (pixels - mean[None, :, None, None]) / std[None, :, None, None]
    logger.info(f"loaded {len(labels)} CIFAR-{CLASS_COUNT[variant]} records from {len(paths)} file(s)")
    return Dataset(
        images=images,
        labels=labels,
        name=name or f"cifar{CLASS_COUNT[variant]}",
        num_classes=CLASS_COUNT[variant],
        normalization={"kind": "channel_standardized", "mean": mean.tolist(), "std": std.tolist()},
    )


def write_cifar(path: Union[str, Path], pixels: np.ndarray, labels: np.ndarray, variant: str, coarse=None) -> Path:
    """Write records in the binary batch layout"""
    path = Path(path)
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8).reshape(len(labels), PIXELS)
    cols = [np.asarray(labels, dtype=np.uint8)[:, None]]
    if variant == "c100":
        coarse = np.zeros(len(labels), dtype=np.uint8) if coarse is None else np.asarray(coarse, dtype=np.uint8)
        cols.insert(0, coarse[:, None])
    path.parent.mkdir(parents=True, exist_ok=True)
    np.concatenate(cols + [pixels], axis=1).tofile(path)
    return path
