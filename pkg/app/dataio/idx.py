"""MNIST IDX reader and writer"""
import gzip
import struct
from pathlib import Path
from typing import Union

import numpy as np

from core.errors import DimensionError, ParseError
from core.logging import get_logger
from dataio.dataset import Dataset

logger = get_logger("dataio.idx")

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def _read_bytes(path: Path) -> bytes:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse(raw: bytes, path: Path, expected_magic: int) -> np.ndarray:
    if len(raw) < 8:
        raise ParseError(f"{path}: truncated header at byte offset {len(raw)}", {"offset": len(raw)})
    magic, count = struct.unpack(">II", raw[:8])
    if magic != expected_magic:
        raise ParseError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}",
            {"offset": 0, "magic": magic},
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ParseError(f"{path}: truncated dimension block at byte offset {len(raw)}", {"offset": len(raw)})
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    expected = header + int(np.prod(dims))
    if len(raw) < expected:
        raise ParseError(
            f"{path}: truncated payload at byte offset {len(raw)}, expected {expected} bytes",
            {"offset": len(raw), "expected": expected},
        )
    if len(raw) > expected:
        logger.warning(f"{path}: {len(raw) - expected} trailing bytes ignored")
    return np.frombuffer(raw, dtype=np.uint8, count=expected - header, offset=header).reshape(dims)


def read_idx_images(path: Union[str, Path]) -> np.ndarray:
    """Raw uint8 images [N, rows, cols]"""
    path = Path(path)
    return _parse(_read_bytes(path), path, IMAGE_MAGIC)


def read_idx_labels(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    return _parse(_read_bytes(path), path, LABEL_MAGIC)


def load_idx(images_path: Union[str, Path], labels_path: Union[str, Path], name: str = "mnist") -> Dataset:
    """
    Parse an IDX image/label pair

    Pixels are scaled to [0, 1] and then mapped affinely to [-1, 1] so raw inputs
    sit inside the spline domain.

    Args:
        images_path: idx3-ubyte file (optionally .gz)
        labels_path: idx1-ubyte file (optionally .gz)
        name: dataset name

    Returns:
        Dataset: images [N, 1, rows, cols]
    """
    raw_images = read_idx_images(images_path)
    raw_labels = read_idx_labels(labels_path)
    if raw_images.shape[0] != raw_labels.shape[0]:
        raise DimensionError(
            f"{images_path} holds {raw_images.shape[0]} images but {labels_path} holds {raw_labels.shape[0]} labels"
        )
    images = raw_images.astype(np.float64) / 255.0 * 2.0 - 1.0
    logger.info(f"loaded {raw_images.shape[0]} IDX images from {images_path}")
    return Dataset(
        images=images[:, None, :, :],
        labels=raw_labels.astype(np.int64),
        name=name,
        num_classes=10,
        normalization={"kind": "unit_interval_signed"},
    )


def write_idx(path: Union[str, Path], data: np.ndarray) -> Path:
    """Write uint8 data as IDX (images when 3-D, labels when 1-D)"""
    path = Path(path)
    data = np.ascontiguousarray(data, dtype=np.uint8)
    magic = {3: IMAGE_MAGIC, 1: LABEL_MAGIC}.get(data.ndim)
    if magic is None:
        raise DimensionError(f"IDX writer expects 1-D labels or 3-D images, got {data.ndim}-D")
    blob = struct.pack(">I", magic) + struct.pack(">" + "I" * data.ndim, *data.shape) + data.tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(blob)
    return path
