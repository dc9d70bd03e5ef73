"""Dense float64 tensor helpers and the finite-difference gradient oracle"""
from typing import Callable, Tuple

import numpy as np

from core.errors import ContractViolation, DimensionError, EvaluationError, NonFiniteError
from core.logging import get_logger

logger = get_logger("numerics.tensor_ops")

DTYPE = np.float64

# Above this size op_norm switches from dense SVD to power iteration
DENSE_SVD_LIMIT = 512


def as_tensor(value, name: str = "tensor") -> np.ndarray:
    """Coerce to a contiguous float64 array"""
    return np.ascontiguousarray(value, dtype=DTYPE)


def ensure_finite(arr: np.ndarray, what: str) -> np.ndarray:
    """Raise NonFiniteError if any entry is NaN or Inf"""
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteError(f"non-finite values in {what}", {"count": bad, "shape": list(np.shape(arr))})
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Matrix product of two 2-D tensors

    Args:
        a: [m, k]
        b: [k, n]

    Returns:
        np.ndarray: [m, n]
    """
    a = as_tensor(a, "a")
    b = as_tensor(b, "b")
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("matmul expects 2-D operands", {"a": list(a.shape), "b": list(b.shape)})
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"inner dimensions disagree: {a.shape[1]} vs {b.shape[0]}",
            {"a": list(a.shape), "b": list(b.shape)},
        )
    return ensure_finite(a @ b, "matmul result")


def grad_check(
    f: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    x: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """
    Compare an analytic gradient with central differences

    Args:
        f: returns (value, analytic gradient with the shape of x)
        x: evaluation point
        eps: perturbation in [1e-7, 1e-3]

    Returns:
        float: max over coordinates of |analytic - numeric| / max(1, |analytic|)
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractViolation(f"eps must lie in [1e-7, 1e-3], got {eps}")

    x = np.array(x, dtype=DTYPE, copy=True)
    value, analytic = f(x.copy())
    if not np.isfinite(value):
        raise EvaluationError("objective is not finite at x")
    analytic = np.asarray(analytic, dtype=DTYPE)
    if analytic.shape != x.shape:
        raise DimensionError("analytic gradient shape differs from x", {"grad": list(analytic.shape), "x": list(x.shape)})

    flat = x.reshape(-1)
    numeric = np.empty_like(flat)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + eps
        plus, _ = f(x.copy())
        flat[idx] = orig - eps
        minus, _ = f(x.copy())
        flat[idx] = orig
        if not (np.isfinite(plus) and np.isfinite(minus)):
            raise EvaluationError("objective is not finite at a perturbed point", {"coordinate": idx})
        numeric[idx] = (plus - minus) / (2.0 * eps)

    a = analytic.reshape(-1)
    if a.size == 0:
        return 0.0
    err = np.abs(a - numeric) / np.maximum(1.0, np.abs(a))
    return float(err.max())


def singular_values(m: np.ndarray) -> np.ndarray:
    """Singular values in descending order"""
    m = as_tensor(m, "m")
    if m.ndim != 2 or m.size == 0:
        raise DimensionError("singular values need a non-empty 2-D matrix", {"shape": list(m.shape)})
    ensure_finite(m, "matrix")
    return np.linalg.svd(m, compute_uv=False)


def op_norm(m: np.ndarray, tol: float = 1e-12, max_iter: int = 10000) -> float:
    """
    Largest singular value

    Small matrices use a dense SVD; larger ones use power iteration on m^T m
    starting from a fixed vector so results are deterministic.
    """
    m = as_tensor(m, "m")
    if m.ndim != 2 or m.size == 0:
        raise DimensionError("op_norm needs a non-empty 2-D matrix", {"shape": list(m.shape)})
    ensure_finite(m, "matrix")

    if max(m.shape) <= DENSE_SVD_LIMIT:
        return float(np.linalg.svd(m, compute_uv=False)[0])

    gram = m.T @ m if m.shape[0] >= m.shape[1] else m @ m.T
    v = np.ones(gram.shape[0], dtype=DTYPE) / np.sqrt(gram.shape[0])
    eig = 0.0
    for _ in range(max_iter):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new_eig = float(v @ gram @ v)
        if abs(new_eig - eig) <= tol * max(1.0, abs(new_eig)):
            eig = new_eig
            break
        eig = new_eig
    else:
        logger.warning(f"power iteration hit max_iter={max_iter} on shape {m.shape}")
    return float(np.sqrt(max(eig, 0.0)))


def numeric_rank(m: np.ndarray, rel_tol: float = 1e-8) -> int:
    """Count singular values above rel_tol * sigma_max; zero matrix has rank 0"""
    if not 0.0 < rel_tol < 1.0:
        raise ContractViolation(f"rel_tol must lie in (0, 1), got {rel_tol}")
    sv = singular_values(m)
    if sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv > rel_tol * sv[0]))
