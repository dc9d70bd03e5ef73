import numpy as np
import pytest

from core.errors import ContractViolation, DimensionError, EvaluationError, NonFiniteError
from numerics.rng import Rng
from numerics.tensor_ops import DENSE_SVD_LIMIT, grad_check, matmul, numeric_rank, op_norm, singular_values


def jacobi_singular_values(m: np.ndarray, sweeps: int = 60) -> np.ndarray:
    """One-sided Jacobi: orthogonalize columns by plane rotations"""
    a = np.array(m, dtype=np.float64, copy=True)
    if a.shape[0] < a.shape[1]:
        a = a.T.copy()
    n = a.shape[1]
    for _ in range(sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = a[:, p] @ a[:, p]
                beta = a[:, q] @ a[:, q]
                gamma = a[:, p] @ a[:, q]
                if abs(gamma) <= 1e-15 * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta)) if zeta != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                ap = a[:, p].copy()
                a[:, p] = c * ap - s * a[:, q]
                a[:, q] = s * ap + c * a[:, q]
        if not rotated:
            break
    return np.sort(np.linalg.norm(a, axis=0))[::-1]


def test_matmul_matches_triple_loop():
    rng = Rng(0)
    a = rng.normal((3, 4))
    b = rng.normal((4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(matmul(a, b), expected, rtol=1e-14, atol=1e-14)


def test_matmul_is_associative():
    rng = Rng(21)
    for trial in range(20):
        m, k, p, n = (int(v) for v in rng.child(trial).integers(1, 9, size=4))
        a = rng.child(trial, "a").normal((m, k))
        b = rng.child(trial, "b").normal((k, p))
        c = rng.child(trial, "c").normal((p, n))
        left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
        scale = np.abs(a) @ np.abs(b) @ np.abs(c)
        assert np.all(np.abs(left - right) <= 1e-9 * scale)


def test_matmul_small_example():
    np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[5], [6]]), [[17], [39]])


def test_matmul_rejects_inner_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_rejects_non_finite_product():
    with pytest.raises(NonFiniteError):
        matmul([[1e308, 1e308]], [[1e308], [1e308]])


def test_grad_check_quadratic():
    def f(x):
        return float(np.sum(x ** 2)), 2.0 * x

    assert grad_check(f, np.array([1.0, -2.0, 0.5])) <= 1e-6


def test_grad_check_detects_wrong_gradient():
    def f(x):
        return float(np.sum(x ** 2)), 3.0 * x

    assert grad_check(f, np.array([1.0, 2.0])) > 0.1


def test_grad_check_eps_range():
    with pytest.raises(ContractViolation):
        grad_check(lambda x: (0.0, x), np.zeros(2), eps=1e-2)


def test_grad_check_non_finite_objective():
    with pytest.raises(EvaluationError):
        grad_check(lambda x: (float("nan"), x), np.zeros(2))


def test_op_norm_diagonal():
    assert op_norm(np.diag([3.0, 4.0])) == pytest.approx(4.0, abs=1e-12)


def test_op_norm_matches_jacobi_oracle():
    m = Rng(3).normal((7, 5))
    assert op_norm(m) == pytest.approx(jacobi_singular_values(m)[0], rel=1e-10)
    np.testing.assert_allclose(singular_values(m), jacobi_singular_values(m), rtol=1e-10)


def test_op_norm_power_iteration_path():
    # rank one above the dense limit: the only singular value is |u| |v|
    u = np.linspace(1.0, 2.0, DENSE_SVD_LIMIT + 8)
    v = np.array([1.0, -2.0, 2.0])
    assert op_norm(np.outer(u, v)) == pytest.approx(np.linalg.norm(u) * 3.0, rel=1e-9)


def test_numeric_rank():
    assert numeric_rank(np.zeros((3, 3))) == 0
    assert numeric_rank(np.outer([1.0, 2.0, 3.0], [1.0, 1.0])) == 1
    assert numeric_rank(np.eye(4)) == 4
    with pytest.raises(ContractViolation):
        numeric_rank(np.eye(2), rel_tol=1.5)


def test_rng_children_are_independent_of_draw_order():
    root = Rng(11)
    first = root.child("a").normal(4)
    root.child("b").normal(100)
    np.testing.assert_array_equal(Rng(11).child("a").normal(4), first)
    assert not np.array_equal(root.child("a", 1).normal(4), first)


def test_op_norm_is_transpose_invariant():
    dense = Rng(5).normal((9, 4))
    assert op_norm(dense.T) == pytest.approx(op_norm(dense), rel=1e-10)
    # both orientations exceed the dense limit and go through power iteration
    tall = Rng(6).normal((DENSE_SVD_LIMIT + 8, 4))
    assert op_norm(tall.T) == pytest.approx(op_norm(tall), rel=1e-10)
    assert op_norm(tall) == pytest.approx(np.linalg.svd(tall, compute_uv=False)[0], rel=1e-9)


def test_rng_is_reproducible_for_a_seed():
    a, b = Rng(2024), Rng(2024)
    np.testing.assert_array_equal(a.normal(10_000), b.normal(10_000))
    np.testing.assert_array_equal(a.uniform(size=10_000), b.uniform(size=10_000))
    np.testing.assert_array_equal(a.child("x").integers(0, 1000, size=10_000), b.child("x").integers(0, 1000, size=10_000))
    assert not np.array_equal(Rng(2025).normal(10_000), Rng(2024).normal(10_000))
