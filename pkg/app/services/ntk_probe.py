"""Empirical NTK of the classification head: Jacobians, cross-task Grams and normalized norms"""
import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from cl.fisher import fisher_overlap
from cl.kancl import knot_fisher
from core.errors import ConfigError, DimensionError, ProbeError
from core.logging import get_logger
from dataio.dataset import Dataset
from models.experiment import ModelSpec
from nn.kan import KanLayer
from nn.linear import MlpLayer
from nn.model import Model, build_model, match_mlp_hidden, mlp_head
from numerics.rng import Rng
from numerics.spline import SplineGrid, basis_eval
from numerics.tensor_ops import numeric_rank, op_norm
from services.harness import BENCHMARKS, TaskStream, build_stream
from utils.decorators import timed

logger = get_logger("services.ntk_probe")

RANK_TOL = 1e-8
NORM_SLACK = 1e-9
REPORT_COLUMNS = ["benchmark", "head", "seed", "pair", "norm11", "norm22", "norm12", "k_tilde", "rank12", "rank_tol"]


@dataclass
class JacobianBlock:
    """J[(a * C + o), :] = d f_o(x_a) / d head parameters, in registry order"""
    J: np.ndarray
    n: int
    C: int
    paths: List[str]
    columns: Dict[str, slice]


@dataclass
class NtkReport:
    benchmark: str
    head: str
    seed: int
    pair: str
    norm11: float
    norm22: float
    norm12: float
    k_tilde: float
    rank12: int
    rank_tol: float


def head_jacobian(model: Model, samples: np.ndarray) -> JacobianBlock:
    """
    Exact per-sample, per-output gradients of head outputs w.r.t. head parameters

    Args:
        model: network whose head is probed
        samples: head inputs [n, features]

    Returns:
        JacobianBlock
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ProbeError(f"head Jacobian needs a non-empty [n, features] sample block, got {list(samples.shape)}")
    n, C = samples.shape[0], model.num_classes
    _, caches = model.head_forward(samples)
    paths = [p for p in model.registry if p.startswith("head.")]
    columns: Dict[str, slice] = {}
    offset = 0
    for p in paths:
        size = model.registry[p].value.size
        columns[p] = slice(offset, offset + size)
        offset += size
    J = np.zeros((n * C, offset))
    for o in range(C):
        g = np.zeros((n, C))
        g[:, o] = 1.0
        per_sample: Dict[str, np.ndarray] = {}
        for idx in reversed(range(len(model.head))):
            g, grads = model.head[idx].backward(caches[idx], g, "sample", f"head.{idx}.", None, need_input_grad=idx > 0)
            per_sample.update(grads)
        for p in paths:
            J[o::C, columns[p]] = per_sample[p].reshape(n, -1)
    return JacobianBlock(J, n, C, paths, columns)


def cross_gram(J1: Union[JacobianBlock, np.ndarray], J2: Union[JacobianBlock, np.ndarray]) -> np.ndarray:
    a = J1.J if isinstance(J1, JacobianBlock) else J1
    b = J2.J if isinstance(J2, JacobianBlock) else J2
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"Jacobians cover {a.shape[1]} and {b.shape[1]} parameters")
    return a @ b.T


def _layer_factors(model: Model, samples: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Per head layer: (U [(n*C), out_l], Phi [n, feat_l]) such that the per-sample gradient
    of output o w.r.t. that layer's parameters is outer(U[a*C+o], Phi[a])
    """
    n, C = samples.shape[0], model.num_classes
    _, caches = model.head_forward(samples)
    U = [np.zeros((n * C, layer.out_dim)) for layer in model.head]
    for o in range(C):
        g = np.zeros((n, C))
        g[:, o] = 1.0
        for idx in reversed(range(len(model.head))):
            layer, cache = model.head[idx], caches[idx]
            if isinstance(layer, MlpLayer):
                U[idx][o::C] = g * layer._act_grad(cache["z"], cache["y"])
            else:
                U[idx][o::C] = g
            if idx:
                g, _ = layer.backward(cache, g, "grad", f"head.{idx}.", lambda p: False, need_input_grad=True)
    factors = []
    for idx, layer in enumerate(model.head):
        cache = caches[idx]
        if isinstance(layer, KanLayer):
            phi = np.concatenate([cache["silu"], cache["bases"].reshape(n, -1)], axis=1)
        else:
            phi = np.concatenate([cache["x"], np.ones((n, 1))], axis=1)
        factors.append((U[idx], phi))
    return factors


def factored_cross_gram(model: Model, samples1: np.ndarray, samples2: np.ndarray) -> np.ndarray:
    """
    Same matrix as cross_gram(head_jacobian(x1), head_jacobian(x2)) without forming J:
    sum over layers of (U1 U2^T) * kron(Phi1 Phi2^T, ones(C, C))
    """
    C = model.num_classes
    f1 = _layer_factors(model, np.asarray(samples1, dtype=np.float64))
    f2 = _layer_factors(model, np.asarray(samples2, dtype=np.float64))
    K = np.zeros((f1[0][0].shape[0], f2[0][0].shape[0]))
    for (u1, p1), (u2, p2) in zip(f1, f2):
        K += (u1 @ u2.T) * np.kron(p1 @ p2.T, np.ones((C, C)))
    return K


def normalized_cross_norm(K12: np.ndarray, K11: np.ndarray, K22: np.ndarray) -> float:
    """||K12|| / sqrt(||K11|| ||K22||), clipped to [0, 1 + 1e-9]"""
    n11, n22 = op_norm(K11), op_norm(K22)
    if n11 <= 0 or n22 <= 0:
        raise ProbeError("degenerate self-Gram with zero operator norm", {"norm11": n11, "norm22": n22})
    return float(np.clip(op_norm(K12) / np.sqrt(n11 * n22), 0.0, 1.0 + NORM_SLACK))


def probe_pair(model: Model, x1: np.ndarray, x2: np.ndarray) -> Dict[str, float]:
    K11 = factored_cross_gram(model, x1, x1)
    K22 = factored_cross_gram(model, x2, x2)
    K12 = factored_cross_gram(model, x1, x2)
    n11, n22, n12 = op_norm(K11), op_norm(K22), op_norm(K12)
    return {
        "norm11": n11,
        "norm22": n22,
        "norm12": n12,
        "k_tilde": normalized_cross_norm(K12, K11, K22),
        "rank12": numeric_rank(K12, RANK_TOL),
    }


def _probe_models(stream: TaskStream, head_types: Sequence[str], seed: int, grid: int, order: int) -> Dict[str, Model]:
    """KAN head and a parameter-matched (5%) MLP head at initialization, sharing one backbone"""
    hybrid = BENCHMARKS[stream.benchmark].source != "mnist"
    kan = build_model(
        ModelSpec(
            kind="cnn_kan" if hybrid else "pure_kan",
            num_classes=stream.num_classes,
            input_shape=stream.input_shape,
            grid=grid,
            order=order,
            seed=seed,
        )
    )
    models: Dict[str, Model] = {}
    for head in head_types:
        if head == "kan":
            models[head] = kan
        elif head == "mlp":
            kan_hidden = [layer.out_dim for layer in kan.head[:-1]]
            widths = match_mlp_hidden(kan.head_in_dim, stream.num_classes, kan_hidden, kan.head[0].num_basis, 0.05)
            layers = mlp_head([kan.head_in_dim, *widths, stream.num_classes], Rng(seed).child("model", "head"))
            kind = "cnn_mlp" if hybrid else "pure_mlp"
            models[head] = Model(kind, stream.num_classes, stream.input_shape, layers, kan.backbone, kan.feat_norm)
        else:
            raise ConfigError(f"unknown head type '{head}'", {"allowed": ["kan", "mlp"]})
    return models


@timed
def run_probe(
    benchmark: str,
    head_types: Sequence[str] = ("kan", "mlp"),
    n_per_task: int = 64,
    seeds: Sequence[int] = (0, 1, 2),
    all_pairs: bool = False,
    grid: int = 5,
    order: int = 3,
    out_dir: Union[str, Path, None] = None,
    stream: Optional[TaskStream] = None,
    data_root: Union[str, Path, None] = None,
    fisher_overlap_csv: bool = False,
) -> List[NtkReport]:
    """
    Normalized cross-task NTK of KAN and MLP heads at initialization

    Args:
        benchmark: stream to sample tasks from
        head_types: subset of {"kan", "mlp"}
        n_per_task: samples drawn from each task's test split
        seeds: model/sample seeds
        all_pairs: every task pair instead of (0, 1)
        out_dir: where ntk_report.csv (and fisher_overlap.csv) go; None skips writing
        stream: prebuilt stream; built from the cache when None
        fisher_overlap_csv: also emit per-task knot-Fisher cosine overlaps

    Returns:
        List[NtkReport]
    """
    if benchmark not in BENCHMARKS:
        raise ConfigError(f"unknown benchmark '{benchmark}'")
    if n_per_task < 1:
        raise ProbeError("n_per_task must be at least 1")
    reports: List[NtkReport] = []
    overlaps: List[Tuple[int, np.ndarray]] = []
    for seed in seeds:
        rng = Rng(seed)
        s = stream or build_stream(benchmark, None, rng.child("stream"), data_root=data_root)
        if len(s) < 2:
            raise ProbeError("the NTK probe needs at least two tasks")
        pairs = [(a, b) for a in range(len(s)) for b in range(a + 1, len(s))] if all_pairs else [(0, 1)]
        picks = {}
        for t in sorted({i for pair in pairs for i in pair}):
            test = s.tasks[t].test
            index = np.sort(rng.child("probe_samples", t).permutation(len(test))[:n_per_task])
            picks[t] = test.subset(index)
        models = _probe_models(s, head_types, seed, grid, order)
        for head, model in models.items():
            feats = {t: model.features(ds.images, check_domain=False)[0] for t, ds in picks.items()}
            for a, b in pairs:
                values = probe_pair(model, feats[a], feats[b])
                reports.append(NtkReport(benchmark, head, seed, f"{a}-{b}", rank_tol=RANK_TOL, **values))
                logger.info(f"{benchmark} {head} seed={seed} pair={a}-{b}: k_tilde={values['k_tilde']:.4f}")
        if fisher_overlap_csv and "kan" in models:
            fishers = [
                {"head": np.concatenate([f.ravel() for f in knot_fisher(models["kan"], picks[t], class_mask=s.tasks[t].class_mask)])}
                for t in sorted(picks)
            ]
            overlaps.append((seed, fisher_overlap(fishers, ["head"])))
    if out_dir is not None:
        write_report(reports, Path(out_dir) / "ntk_report.csv")
        if overlaps:
            write_overlap(overlaps, Path(out_dir) / "fisher_overlap.csv")
    return reports


def kan_mlp_ratio(reports: Sequence[NtkReport]) -> float:
    """Mean KAN k_tilde over mean MLP k_tilde"""
    kan = [r.k_tilde for r in reports if r.head == "kan"]
    mlp = [r.k_tilde for r in reports if r.head == "mlp"]
    if not kan or not mlp:
        raise ProbeError("ratio needs both KAN and MLP reports")
    return float(np.mean(kan) / np.mean(mlp))


def write_report(reports: Sequence[NtkReport], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for r in reports:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in asdict(r).items()})
    return path


def write_overlap(overlaps: Sequence[Tuple[int, np.ndarray]], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "task_a", "task_b", "cosine"])
        for seed, matrix in overlaps:
            for a in range(matrix.shape[0]):
                for b in range(matrix.shape[1]):
                    writer.writerow([seed, a, b, "" if np.isnan(matrix[a, b]) else repr(float(matrix[a, b]))])
    return path


# Disjoint-support synthetic construction


@dataclass
class SyntheticReport:
    """Outcome of two 1-D tasks with disjoint input supports through one KAN layer"""
    grid_intervals: int
    order: int
    local_knots_task1: List[int]
    local_knots_task2: List[int]
    shared_knots: List[int]
    rho_bar: float
    fisher_product_at_local_knots: float
    cross_gram_max_at_local_knots: float
    spline_cross_rank: int
    kan_cross_rank: int
    mlp_cross_rank: int
    max_joint_active: int
    density_bound: int


def synthetic_disjoint_support(
    grid_intervals: int = 5,
    order: int = 3,
    n_per_task: int = 16,
    num_outputs: int = 2,
    seed: int = 0,
    support1: Tuple[float, float] = (-1.0, -0.2),
    support2: Tuple[float, float] = (0.2, 1.0),
) -> SyntheticReport:
    """
    Run the disjoint-support construction

    Task-local knots are those whose basis is zero on every input of the other task.
    Their per-knot Fisher products and cross-Gram spline blocks must be exactly zero.
    The spline part of the cross-Gram is a sum of one rank-C term per shared knot.
    """
    if not support1[1] < support2[0]:
        raise ConfigError("task supports must be disjoint with task 1 on the left")
    if num_outputs < 2:
        raise ConfigError("the construction needs at least two outputs for a non-trivial Fisher")
    rng = Rng(seed).child("synthetic")
    grid = SplineGrid(grid_intervals=grid_intervals, order=order)
    K = grid.num_basis
    x1 = rng.child("x1").uniform(support1[0], support1[1], size=(n_per_task, 1))
    x2 = rng.child("x2").uniform(support2[0], support2[1], size=(n_per_task, 1))
    model = Model("pure_kan", num_outputs, (1, 1, 1), [KanLayer(1, num_outputs, grid, rng.child("layer"))])

    b1 = basis_eval(grid, x1[:, 0])
    b2 = basis_eval(grid, x2[:, 0])
    active1 = np.any(b1 != 0.0, axis=0)
    active2 = np.any(b2 != 0.0, axis=0)
    local1 = [int(k) for k in np.flatnonzero(active1 & ~active2)]
    local2 = [int(k) for k in np.flatnonzero(active2 & ~active1)]
    shared = [int(k) for k in np.flatnonzero(active1 & active2)]
    local = sorted(local1 + local2)

    ds1 = Dataset(x1.reshape(-1, 1, 1, 1), rng.child("y1").integers(0, num_outputs, size=n_per_task), "task1", num_outputs)
    ds2 = Dataset(x2.reshape(-1, 1, 1, 1), rng.child("y2").integers(0, num_outputs, size=n_per_task), "task2", num_outputs)
    product = knot_fisher(model, ds1)[0] * knot_fisher(model, ds2)[0]
    fisher_local = float(np.max(np.abs(product[:, :, local]))) if local else 0.0

    J1 = head_jacobian(model, x1)
    J2 = head_jacobian(model, x2)
    cols = J1.columns["head.0.spline_coeffs"]
    s1 = J1.J[:, cols].reshape(-1, num_outputs, K)
    s2 = J2.J[:, cols].reshape(-1, num_outputs, K)
    gram_local = max((float(np.max(np.abs(s1[:, :, k] @ s2[:, :, k].T))) for k in local), default=0.0)
    spline_gram = J1.J[:, cols] @ J2.J[:, cols].T

    mlp_hidden = match_mlp_hidden(1, num_outputs, [num_outputs], K, 0.05)
    mlp = Model("pure_mlp", num_outputs, (1, 1, 1), mlp_head([1, *mlp_hidden, num_outputs], rng.child("mlp")))
    kan_two_layer = Model(
        "pure_kan",
        num_outputs,
        (1, 1, 1),
        [KanLayer(1, num_outputs, grid, rng.child("kan2", 0)), KanLayer(num_outputs, num_outputs, grid, rng.child("kan2", 1))],
    )
    joint = (b1[:, None, :] != 0.0) & (b2[None, :, :] != 0.0)
    report = SyntheticReport(
        grid_intervals=grid_intervals,
        order=order,
        local_knots_task1=local1,
        local_knots_task2=local2,
        shared_knots=shared,
        rho_bar=len(local) / K,
        fisher_product_at_local_knots=fisher_local,
        cross_gram_max_at_local_knots=gram_local,
        spline_cross_rank=numeric_rank(spline_gram, RANK_TOL),
        kan_cross_rank=numeric_rank(factored_cross_gram(kan_two_layer, x1, x2), RANK_TOL),
        mlp_cross_rank=numeric_rank(factored_cross_gram(mlp, x1, x2), RANK_TOL),
        max_joint_active=int(joint.sum(axis=2).max()),
        density_bound=(order + 1) ** 2,
    )
    logger.info(
        f"disjoint-support construction: rho_bar={report.rho_bar:.3f}, local knots {local}, "
        f"spline cross rank {report.spline_cross_rank}"
    )
    return report
