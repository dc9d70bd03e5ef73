"""Shared fixtures: synthetic dataset caches, small models, API client"""
import gzip
from pathlib import Path
from typing import Callable, Dict

import numpy as np
import pytest
from fastapi.testclient import TestClient

from dataio.cifar import write_cifar
from dataio.dataset import Dataset
from dataio.idx import write_idx
from models.experiment import ModelSpec
from nn.model import Model, build_model
from numerics.rng import Rng

MNIST_SIDE = 8
CIFAR_PER_CLASS = 3


def _class_images(labels: np.ndarray, side: int, channels: int, seed: int) -> np.ndarray:
    """uint8 images whose bright block position encodes the label, plus noise"""
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 40, size=(len(labels), channels, side, side)).astype(np.int64)
    cells = side // 2
    for i, y in enumerate(labels):
        r, c = divmod(int(y) % (cells * cells), cells)
        images[i, :, 2 * r:2 * r + 2, 2 * c:2 * c + 2] += 200
    return np.clip(images, 0, 255).astype(np.uint8)


def write_mnist_cache(root: Path, per_class_train: int = 12, per_class_test: int = 4, side: int = MNIST_SIDE) -> Path:
    base = root / "mnist"
    base.mkdir(parents=True, exist_ok=True)
    for split, per_class, seed in (("train", per_class_train, 1), ("t10k", per_class_test, 2)):
        labels = np.repeat(np.arange(10), per_class).astype(np.uint8)
        labels = np.random.default_rng(seed).permutation(labels)
        images = _class_images(labels, side, 1, seed)[:, 0]
        write_idx(base / f"{split}-labels-idx1-ubyte", labels)
        raw = base / f"{split}-images-idx3-ubyte"
        write_idx(raw, images)
        if split == "train":
            with raw.open("rb") as src, gzip.open(base / f"{raw.name}.gz", "wb") as dst:
                dst.write(src.read())
            raw.unlink()
    return root


def write_cifar10_cache(root: Path, per_class: int = CIFAR_PER_CLASS) -> Path:
    folder = root / "cifar10" / "cifar-10-batches-bin"
    for name, seed in [(f"data_batch_{i}.bin", i) for i in range(1, 6)] + [("test_batch.bin", 9)]:
        labels = np.random.default_rng(seed).permutation(np.repeat(np.arange(10), per_class))
        pixels = _class_images(labels, 32, 3, seed)
        write_cifar(folder / name, pixels, labels, "c10")
    return root


@pytest.fixture(scope="session")
def data_root(tmp_path_factory) -> Path:
    """Cache root holding a synthetic 8x8 MNIST and a tiny CIFAR-10"""
    root = tmp_path_factory.mktemp("data")
    write_mnist_cache(root)
    write_cifar10_cache(root)
    return root


@pytest.fixture
def output_root(tmp_path) -> Path:
    out = tmp_path / "runs"
    out.mkdir()
    return out


@pytest.fixture
def make_model() -> Callable[..., Model]:
    def _make(kind: str = "pure_kan", **fields) -> Model:
        spec: Dict = {"kind": kind, "num_classes": 3, "input_shape": (1, 2, 2), "hidden": [4], "seed": 0}
        if kind.startswith("cnn"):
            spec.update(input_shape=(3, 8, 8), stem_width=4, backbone_widths=[4, 6], feature_dim=8)
        spec.update(fields)
        return build_model(ModelSpec(**spec))
    return _make


@pytest.fixture
def toy_dataset() -> Dataset:
    """24 samples of shape [1, 2, 2] with inputs in (-0.9, 0.9) and 3 classes"""
    rng = Rng(7)
    images = rng.uniform(-0.9, 0.9, size=(24, 1, 2, 2))
    labels = np.arange(24) % 3
    return Dataset(images, labels, "toy", 3)


@pytest.fixture
def test_client(output_root) -> TestClient:
    from core.dependencies import Services, get_services
    from main import app

    Services.reset()
    services = get_services()
    services.experiment_runner.output_root = output_root
    with TestClient(app) as client:
        yield client
    Services.reset()
