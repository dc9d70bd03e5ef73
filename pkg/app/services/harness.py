"""Task streams, the per-task training loop, evaluation and ACC/FGT"""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from cl.methods import ContinualMethod
from core.config import settings
from core.errors import ConfigError, DataMissingError, MetricError, NonFiniteError
from core.logging import get_logger
from dataio.cifar import load_cifar
from dataio.dataset import Dataset
from dataio.idx import load_idx
from dataio.transforms import filter_classes, permute_pixels, rotate_images
from models.experiment import DataConfig
from nn.losses import accuracy, cross_entropy
from nn.model import Model
from nn.optim import Adam
from numerics.rng import Rng
from utils.decorators import timed

logger = get_logger("services.harness")

EVAL_BATCH = 512


@dataclass(frozen=True)
class BenchmarkInfo:
    source: str
    kind: str
    num_tasks: int


BENCHMARKS: Dict[str, BenchmarkInfo] = {
    "split_mnist_5t": BenchmarkInfo("mnist", "split", 5),
    "permuted_mnist_10t": BenchmarkInfo("mnist", "permuted", 10),
    "rotation_mnist_10t": BenchmarkInfo("mnist", "rotation", 10),
    "split_cifar10_5t": BenchmarkInfo("cifar10", "split", 5),
    "split_cifar100_10t": BenchmarkInfo("cifar100", "split", 10),
}

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "cifar10": ("cifar-10-batches-bin", [f"data_batch_{i}.bin" for i in range(1, 6)], ["test_batch.bin"], "c10"),
    "cifar100": ("cifar-100-binary", ["train.bin"], ["test.bin"], "c100"),
}


@dataclass
class Task:
    """One step of the stream; class_mask is None when every logit is allowed"""
    index: int
    train: Dataset
    test: Dataset
    classes: Tuple[int, ...]
    transform: Dict[str, object] = field(default_factory=dict)
    class_mask: Optional[np.ndarray] = None


@dataclass
class TaskStream:
    benchmark: str
    protocol: str
    tasks: List[Task]
    num_classes: int
    input_shape: Tuple[int, int, int]

    def __len__(self) -> int:
        return len(self.tasks)


def _missing(name: str, path: Path) -> DataMissingError:
    return DataMissingError(
        f"{name} files not found under {path}; fetch them with `python {settings.FETCH_SCRIPT} {name}`"
        f" or point SPLINECL_DATA_ROOT at an existing copy",
        {"path": str(path), "fetch_script": settings.FETCH_SCRIPT},
    )


def _find(base: Path, stem: str) -> Optional[Path]:
    for candidate in (base / stem, base / f"{stem}.gz"):
        if candidate.exists():
            return candidate
    return None


def load_source(source: str, data_root: Union[str, Path, None] = None) -> Tuple[Dataset, Dataset]:
    """
    Load the (train, test) pair of a source dataset from the local cache

    Layout: <root>/mnist/*-ubyte[.gz], <root>/cifar10/cifar-10-batches-bin/*.bin,
    <root>/cifar100/cifar-100-binary/*.bin
    """
    root = Path(data_root or settings.DATA_ROOT)
    base = root / source
    if source == "mnist":
        found = {split: [_find(base, stem) for stem in stems] for split, stems in MNIST_FILES.items()}
        if any(p is None for paths in found.values() for p in paths):
            raise _missing(source, base)
        train = load_idx(*found["train"], name="mnist_train")
        test = load_idx(*found["test"], name="mnist_test")
        return train, test
    if source in CIFAR_FILES:
        folder, train_files, test_files, variant = CIFAR_FILES[source]
        cdir = base / folder if (base / folder).exists() else base
        train_paths = [cdir / f for f in train_files]
        test_paths = [cdir / f for f in test_files]
        if not all(p.exists() for p in train_paths + test_paths):
            raise _missing(source, cdir)
        train = load_cifar(train_paths, variant, name=f"{source}_train")
        stats = {k: train.normalization[k] for k in ("mean", "std")}
        test = load_cifar(test_paths, variant, name=f"{source}_test", stats=stats)
        return train, test
    raise ConfigError(f"unknown dataset source '{source}'")


def _subsample(ds: Dataset, n: Optional[int], rng: Rng) -> Dataset:
    if n is None or n >= len(ds):
        return ds
    return ds.subset(np.sort(rng.permutation(len(ds))[:n]))


def _mask(classes: Sequence[int], num_classes: int) -> np.ndarray:
    mask = np.zeros(num_classes, dtype=bool)
    mask[list(classes)] = True
    return mask


@timed
def build_stream(
    benchmark: str,
    num_tasks: Optional[int],
    rng: Rng,
    protocol: str = "task_il",
    data: Optional[DataConfig] = None,
    data_root: Union[str, Path, None] = None,
    sources: Optional[Tuple[Dataset, Dataset]] = None,
) -> TaskStream:
    """
    Build the task sequence of a benchmark

    Args:
        benchmark: one of BENCHMARKS
        num_tasks: T; None uses the benchmark's own count
        rng: seed stream (class grouping, permutations, subsampling)
        protocol: task_il, class_il or domain_il
        data: subsampling / truncation / rotation knobs
        data_root: cache root override
        sources: preloaded (train, test), skipping the file cache

    Returns:
        TaskStream
    """
    if benchmark not in BENCHMARKS:
        raise ConfigError(f"unknown benchmark '{benchmark}'", {"known": sorted(BENCHMARKS)})
    info = BENCHMARKS[benchmark]
    data = data or DataConfig()
    T = num_tasks or data.num_tasks or info.num_tasks
    train, test = sources if sources is not None else load_source(info.source, data_root)
    C = train.num_classes
    tasks: List[Task] = []

    if info.kind == "split":
        if data.classes_per_task is not None:
            per_task = data.classes_per_task
            if T * per_task > C:
                raise ConfigError(f"{T} tasks x {per_task} classes exceeds the {C} available classes")
        else:
            if C % T:
                raise ConfigError(f"{T} tasks do not divide {C} classes evenly")
            per_task = C // T
        order = np.arange(C) if data.pin_classes else rng.child("classes").permutation(C)
        num_outputs = per_task if protocol == "domain_il" else C
        for t in range(T):
            classes = tuple(int(c) for c in order[t * per_task:(t + 1) * per_task])
            remap = protocol == "domain_il"
            tr = filter_classes(train, classes, remap=remap)
            te = filter_classes(test, classes, remap=remap)
            mask = _mask(classes, C) if protocol == "task_il" else None
            tasks.append(Task(t, tr, te, classes, {"kind": "split"}, mask))
    else:
        num_outputs = C
        for t in range(T):
            if info.kind == "permuted":
                seed = None if t == 0 else int(rng.child("permutation", t).integers(0, 2**63))
                tr, te = permute_pixels(train, seed), permute_pixels(test, seed)
                transform = {"kind": "permutation", "seed": seed}
            else:
                angle = t * 180.0 / T
                tr = rotate_images(train, angle, data.rotation_mode)
                te = rotate_images(test, angle, data.rotation_mode)
                transform = {"kind": "rotation", "degrees": angle}
            tasks.append(Task(t, tr, te, tuple(range(C)), transform, None))

    for task in tasks:
        task.train = _subsample(task.train, data.train_per_task, rng.child("subsample", "train", task.index))
        task.test = _subsample(task.test, data.test_per_task, rng.child("subsample", "test", task.index))
        if len(task.train) == 0:
            raise ConfigError(f"task {task.index} of {benchmark} has no training examples")

    logger.info(
        f"built {benchmark} ({protocol}): {T} tasks, "
        f"{sum(len(t.train) for t in tasks)} train / {sum(len(t.test) for t in tasks)} test examples"
    )
    return TaskStream(benchmark, protocol, tasks, num_outputs, train.image_shape)


@dataclass
class TrainRecord:
    rows: List[Dict[str, float]]
    steps: int


def _batch_mask(stream: TaskStream, task: Task, n_current: int, replay_tasks: Optional[np.ndarray]):
    if task.class_mask is None:
        return None
    masks = [np.broadcast_to(task.class_mask, (n_current, task.class_mask.size))]
    if replay_tasks is not None and replay_tasks.size:
        masks.append(np.stack([stream.tasks[int(t)].class_mask for t in replay_tasks]))
    return np.concatenate(masks)


@timed
def train_task(
    model: Model,
    task: Task,
    method: ContinualMethod,
    optimizer: Adam,
    epochs: int,
    batch_size: int,
    rng: Rng,
    stream: TaskStream,
    step_offset: int = 0,
) -> TrainRecord:
    """
    Train on one task: CE + method penalties, masked head gradients, Adam

    The optimizer state is reset at the start of every task. Shuffles and replay
    draws come from (seed, task, epoch/step) streams, so runs that differ only in
    regularization weights see identical batches.

    Returns:
        TrainRecord: per-epoch mean losses and the number of optimizer steps
    """
    n = len(task.train)
    steps_per_epoch = math.ceil(n / batch_size)
    total_steps = epochs * steps_per_epoch
    optimizer.reset()
    method.begin_task(model, task.index)
    rows: List[Dict[str, float]] = []
    step = 0
    for epoch in range(epochs):
        order = rng.child("shuffle", task.index, epoch).permutation(n)
        sums = {"ce": 0.0, "anchor": 0.0, "bb": 0.0, "total": 0.0}
        correct = 0.0
        for b in range(steps_per_epoch):
            index = order[b * batch_size:(b + 1) * batch_size]
            x = task.train.images[index]
            y = task.train.labels[index]
            replay = method.replay_batch(len(index), rng.child("replay", task.index, step))
            replay_tasks = None
            if replay is not None:
                x = np.concatenate([x, replay[0]])
                y = np.concatenate([y, replay[1]])
                replay_tasks = replay[2]
            mask = _batch_mask(stream, task, len(index), replay_tasks)

            logits, cache = model.forward(x)
            ce, dlogits = cross_entropy(logits, y, mask)
            if not np.isfinite(ce):
                raise NonFiniteError(
                    f"non-finite loss on task {task.index}, epoch {epoch}, step {step}",
                    {"task": task.index, "epoch": epoch, "step": step, "batch": index[:8].tolist()},
                )
            grads = model.backward(cache, dlogits)
            ce_grads = dict(grads)
            penalties = method.regularize(model, grads, progress=step / total_steps)
            try:
                deltas = optimizer.step(model.registry, grads)
            except NonFiniteError as exc:
                exc.details.update({"task": task.index, "epoch": epoch, "step": step})
                logger.error(f"aborting task {task.index}: {exc.message} {exc.details}")
                raise
            method.after_step(ce_grads, deltas)

            sums["ce"] += ce
            sums["anchor"] += penalties.anchor
            sums["bb"] += penalties.bb
            sums["total"] += ce + penalties.anchor + penalties.bb
            cur_mask = None if mask is None else mask[: len(index)]
            correct += accuracy(logits[: len(index)], y[: len(index)], cur_mask) * len(index)
            step += 1
        means = {k: v / steps_per_epoch for k, v in sums.items()}
        rows.append({"step": step_offset + step, "task": task.index, **means})
        logger.info(
            f"task {task.index} epoch {epoch + 1}/{epochs}: ce={means['ce']:.4f} anchor={means['anchor']:.4f} "
            f"bb={means['bb']:.4f} train_acc={correct / n:.4f}"
        )
    return TrainRecord(rows, step)


def post_task_hooks(model: Model, task: Task, method: ContinualMethod) -> List[str]:
    return method.post_task(model, task, task.class_mask)


def task_accuracy(model: Model, dataset: Dataset, class_mask: Optional[np.ndarray] = None) -> float:
    if len(dataset) == 0:
        logger.warning(f"{dataset.name} has no test examples; accuracy reported as 0")
        return 0.0
    correct = 0.0
    for start in range(0, len(dataset), EVAL_BATCH):
        x = dataset.images[start:start + EVAL_BATCH]
        y = dataset.labels[start:start + EVAL_BATCH]
        logits, _ = model.forward(x, check_domain=False)
        correct += accuracy(logits, y, class_mask) * len(y)
    return correct / len(dataset)


@timed
def evaluate(model: Model, stream: TaskStream, upto: int, protocol: Optional[str] = None) -> List[float]:
    """
    Test accuracy on tasks 0..upto

    Task-IL masks logits to each task's classes; Class-IL and Domain-IL use every logit.
    """
    protocol = protocol or stream.protocol
    row = []
    for task in stream.tasks[: upto + 1]:
        mask = task.class_mask if protocol == "task_il" else None
        row.append(task_accuracy(model, task.test, mask))
    return row


class ResultMatrix:
    """R[s, t]: accuracy on task t after training through task s; NaN where unused"""

    def __init__(self, num_tasks: int):
        self.values = np.full((num_tasks, num_tasks), np.nan)

    @property
    def num_tasks(self) -> int:
        return self.values.shape[0]

    def record(self, s: int, row: Sequence[float]) -> None:
        if len(row) != s + 1:
            raise MetricError(f"row {s} needs {s + 1} entries, got {len(row)}")
        self.values[s, : s + 1] = row

    def completed_rows(self) -> int:
        done = 0
        for s in range(self.num_tasks):
            if np.all(np.isfinite(self.values[s, : s + 1])):
                done = s + 1
            else:
                break
        return done

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "ResultMatrix":
        """Rows of length 1..T (lower triangle) or full rows"""
        R = cls(len(rows))
        for s, row in enumerate(rows):
            R.values[s, : min(len(row), len(rows))] = list(row)[: len(rows)]
            R.values[s, s + 1:] = np.nan
        return R

    def to_csv(self, path: Union[str, Path], rows: Optional[int] = None) -> Path:
        """Header t0..t{T-1}; one row per completed task; unused cells left empty"""
        path = Path(path)
        rows = self.completed_rows() if rows is None else rows
        lines = [",".join(f"t{t}" for t in range(self.num_tasks))]
        for s in range(rows):
            lines.append(",".join(repr(float(v)) if np.isfinite(v) else "" for v in self.values[s]))
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "ResultMatrix":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        if not lines:
            raise MetricError(f"{path} is empty")
        T = len(lines[0].split(","))
        R = cls(T)
        for s, line in enumerate(lines[1:]):
            if s >= T:
                raise MetricError(f"{path} has more rows than tasks")
            cells = line.split(",")
            R.values[s] = [float(c) if c.strip() else np.nan for c in cells]
        return R


def _as_matrix(R) -> np.ndarray:
    if isinstance(R, ResultMatrix):
        values = R.values
    elif isinstance(R, np.ndarray):
        values = R.astype(np.float64)
    else:
        values = ResultMatrix.from_rows(R).values
    if values.ndim != 2 or values.shape[0] == 0 or values.shape[0] > values.shape[1]:
        raise MetricError(f"result matrix must be T x T, got {list(values.shape)}")
    T = values.shape[0]
    for s in range(T):
        if not np.all(np.isfinite(values[s, : s + 1])):
            raise MetricError(f"result matrix row {s} is incomplete", {"row": s})
    return values[:, :T]


def acc_metric(R) -> float:
    """Mean of the final row"""
    values = _as_matrix(R)
    return float(np.mean(values[-1]))


def fgt_metric(R) -> float:
    """Mean over t < T of max over s in [t, T] of R[s, t] - R[T, t]; 0 for a single task"""
    values = _as_matrix(R)
    T = values.shape[0]
    if T == 1:
        return 0.0
    drops = [float(np.max(values[t:, t]) - values[-1, t]) for t in range(T - 1)]
    return float(np.mean(drops))
