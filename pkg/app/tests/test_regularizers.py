import numpy as np
import pytest
from scipy.special import log_softmax, softmax
from scipy.stats import chisquare

from cl.fisher import (
    FisherStore,
    empirical_fisher,
    ewc_penalty,
    fisher_overlap,
    online_fisher_update,
)
from cl.kancl import (
    ImportanceStore,
    accumulate_and_snapshot,
    activation_mass,
    anchor_penalty,
    anneal_scale,
    combine_importance,
    knot_fisher,
    mask_gradient,
)
from cl.methods import METHOD_REGISTRY, ContinualMethod, get_method_spec
from cl.replay import ReplayBuffer
from cl.si import SiState, si_accumulate, si_consolidate, si_penalty
from core.errors import BufferEmptyError, ConfigError, ContractViolation
from dataio.dataset import Dataset
from models.experiment import MethodConfig
from nn.base import Parameter
from nn.kan import KanLayer
from nn.model import Model
from numerics.rng import Rng
from numerics.spline import SplineGrid, basis_eval


def one_edge_model(num_outputs: int = 2, seed: int = 0) -> Model:
    grid = SplineGrid(grid_intervals=5, order=3)
    return Model("pure_kan", num_outputs, (1, 1, 1), [KanLayer(1, num_outputs, grid, Rng(seed))])


def scalar_dataset(x: np.ndarray, labels: np.ndarray, num_classes: int = 2) -> Dataset:
    return Dataset(np.asarray(x, dtype=np.float64).reshape(-1, 1, 1, 1), labels, "scalar", num_classes)


# EWC


def test_ewc_penalty_direct_evaluation():
    registry = {"p": Parameter(np.array([3.0]))}
    store = FisherStore(fisher={"p": np.array([1.0])}, theta={"p": np.array([1.0])})
    value, grads = ewc_penalty(registry, store, 1000.0)
    assert value == pytest.approx(4000.0)
    np.testing.assert_allclose(grads["p"], [4000.0])


def test_ewc_penalty_zero_at_snapshot_and_zero_fisher():
    registry = {"p": Parameter(np.array([3.0, -1.0]))}
    at_snapshot = FisherStore({"p": np.ones(2)}, {"p": np.array([3.0, -1.0])})
    assert ewc_penalty(registry, at_snapshot, 10.0)[0] == 0.0
    no_fisher = FisherStore({"p": np.zeros(2)}, {"p": np.zeros(2)})
    assert ewc_penalty(registry, no_fisher, 10.0)[0] == 0.0


def test_ewc_penalty_path_mismatch():
    store = FisherStore({"q": np.ones(1)}, {"q": np.zeros(1)})
    with pytest.raises(ContractViolation):
        ewc_penalty({"p": Parameter(np.zeros(1))}, store, 1.0)


def test_online_fisher_update():
    F0 = {"p": np.array([2.0, 4.0])}
    first = online_fisher_update(None, FisherStore(F0, {"p": np.zeros(2)}), 0.5)
    second = online_fisher_update(first, FisherStore(F0, {"p": np.ones(2)}), 0.5)
    np.testing.assert_allclose(second.fisher["p"], 1.5 * F0["p"])
    np.testing.assert_array_equal(second.theta["p"], np.ones(2))
    forgot = online_fisher_update(first, FisherStore({"p": np.ones(2)}, {"p": np.ones(2)}), 0.0)
    np.testing.assert_array_equal(forgot.fisher["p"], np.ones(2))
    with pytest.raises(ConfigError):
        online_fisher_update(first, first, 1.5)


def test_empirical_fisher_rejects_unmatched_filter(toy_dataset, make_model):
    with pytest.raises(ConfigError):
        empirical_fisher(make_model(), toy_dataset, "backbone.*")


def test_empirical_fisher_of_confident_model_is_near_zero():
    model = one_edge_model()
    layer = model.head[0]
    layer.base_weight.value = np.array([[0.0], [0.0]])
    layer.spline_coeffs.value = np.zeros_like(layer.spline_coeffs.value)
    layer.spline_coeffs.value[0] = 40.0
    ds = scalar_dataset(np.linspace(-0.9, 0.9, 10), np.zeros(10, dtype=np.int64))
    store = empirical_fisher(model, ds, "head.*")
    assert max(float(np.max(v)) for v in store.fisher.values()) < 1e-20


def test_knot_fisher_factorization():
    """Per-knot Fisher equals the mean of B_k(x)^2 times the squared edge-output score"""
    model = one_edge_model(num_outputs=2, seed=3)
    x = Rng(4).uniform(-0.95, 0.95, size=10)
    y = np.arange(10) % 2
    F = knot_fisher(model, scalar_dataset(x, y))[0]
    logits, _ = model.forward(x.reshape(-1, 1, 1, 1))
    score = -softmax(logits, axis=1)
    score[np.arange(10), y] += 1.0
    bases = basis_eval(model.head[0].grid, x)
    expected = np.einsum("bo,bk->ok", score ** 2, bases ** 2)[:, None, :] / 10
    np.testing.assert_allclose(F, expected, atol=1e-10, rtol=0)


def test_knot_fisher_matches_log_likelihood_differences():
    model = one_edge_model(num_outputs=2, seed=5)
    layer = model.head[0]
    x = np.array([-0.35, 0.42])
    y = np.array([1, 0])
    F = knot_fisher(model, scalar_dataset(x, y))[0]
    h = 1e-6
    numeric = np.zeros_like(F)
    for a in range(2):
        for j in range(2):
            for k in range(layer.num_basis):
                values = []
                for sign in (1.0, -1.0):
                    layer.spline_coeffs.value[j, 0, k] += sign * h
                    logits, _ = model.forward(x[a:a + 1].reshape(1, 1, 1, 1))
                    values.append(log_softmax(logits, axis=1)[0, y[a]])
                    layer.spline_coeffs.value[j, 0, k] -= sign * h
                numeric[j, 0, k] += ((values[0] - values[1]) / (2 * h)) ** 2 / 2
    np.testing.assert_allclose(F, numeric, atol=1e-8)


def test_knot_fisher_is_exactly_zero_outside_support():
    model = one_edge_model()
    x = np.linspace(0.25, 0.95, 12)
    F = knot_fisher(model, scalar_dataset(x, np.arange(12) % 2))[0]
    # bases 0..2 are supported on [-2.2, 0.2]
    assert np.all(F[:, :, :3] == 0.0)
    assert np.all(F[:, :, 3:] > 0.0)


# per-knot importance


def test_activation_mass_single_point_and_partition():
    model = one_edge_model()
    ds = scalar_dataset(np.full(5, 0.3), np.zeros(5, dtype=np.int64))
    A = activation_mass(model, ds)[0]
    np.testing.assert_allclose(A[0], basis_eval(model.head[0].grid, 0.3), atol=1e-15)
    spread = scalar_dataset(np.linspace(-0.9, 0.9, 9), np.zeros(9, dtype=np.int64))
    np.testing.assert_allclose(activation_mass(model, spread)[0].sum(axis=-1), 1.0, atol=1e-10)


def test_combine_importance():
    F = np.full((2, 1, 3), 0.25)
    A = np.zeros((1, 3))
    s = combine_importance(F, A, 1.0, 0.0)
    np.testing.assert_array_equal(s, np.ones((2, 1, 3)))
    assert np.all(combine_importance(np.zeros((2, 1, 3)), A) == 0.0)
    # hand-built two-knot case with the default weights
    F2 = np.array([[[2.0, 1.0]]])
    A2 = np.array([[0.2, 0.8]])
    np.testing.assert_allclose(combine_importance(F2, A2, 1.0, 0.5), [[[1.0 + 0.125, 0.5 + 0.5]]])
    with pytest.raises(ConfigError):
        combine_importance(F2, A2, -1.0, 0.5)


def test_accumulate_and_snapshot():
    model = one_edge_model()
    store = ImportanceStore.for_model(model)
    s = [np.full(model.head[0].spline_coeffs.shape, 0.3)]
    accumulate_and_snapshot(store, s, model)
    np.testing.assert_array_equal(store.S[0], s[0])
    model.head[0].spline_coeffs.value = model.head[0].spline_coeffs.value + 1.0
    accumulate_and_snapshot(store, s, model)
    np.testing.assert_allclose(store.S[0], 2 * s[0])
    np.testing.assert_array_equal(store.c_star[0], model.head[0].spline_coeffs.value)
    assert store.tasks_seen == 2


def test_mask_gradient():
    g = np.array([1.0, -2.0])
    np.testing.assert_array_equal(mask_gradient(g, np.zeros(2), 5.0), g)
    assert float(mask_gradient(np.array([1.0]), np.array([1.0]), 5.0)[0]) == pytest.approx(6.7379e-3, rel=1e-4)
    np.testing.assert_array_equal(mask_gradient(g, np.ones(2), 0.0), g)


def test_anchor_penalty():
    model = one_edge_model()
    store = ImportanceStore.for_model(model)
    store.S[0] = np.zeros_like(store.S[0])
    store.S[0][0, 0, 0] = 1.0
    coeffs = store.c_star[0].copy()
    assert anchor_penalty([coeffs], store, 500.0)[0] == 0.0
    coeffs[0, 0, 0] += 0.1
    coeffs[1, 0, 4] += 3.0  # S = 0 there: free to move
    value, c_grads, w_grads = anchor_penalty([coeffs], store, 500.0)
    assert value == pytest.approx(5.0)
    assert c_grads[0][0, 0, 0] == pytest.approx(100.0)
    assert c_grads[0][1, 0, 4] == 0.0
    assert w_grads is None


def test_anneal_scale():
    assert anneal_scale(0.1, 1.0, 0.5) == pytest.approx(0.05)
    assert anneal_scale(0.0, 1.0, 0.2) == 0.0
    assert anneal_scale(1.0, 0.0, 0.9) == 1.0
    with pytest.raises(ConfigError):
        anneal_scale(1.5, 1.0, 0.0)


def test_regularize_touches_disjoint_parameter_sets(make_model):
    model = make_model("cnn_kan")
    params = MethodConfig(**{"lambda": 10.0, "lambda_b": 10.0})
    method = ContinualMethod("kan_cl_bbewc", params, model, Rng(0))
    method.importance.S = [np.ones_like(s) for s in method.importance.S]
    method.importance.tasks_seen = 1
    method.fisher = FisherStore(
        {p: np.ones_like(model.registry[p].value) for p in model.select(("backbone.*", "feat_norm.*"))},
        {p: np.zeros_like(model.registry[p].value) for p in model.select(("backbone.*", "feat_norm.*"))},
    )
    for layer in model.kan_layers:
        layer.spline_coeffs.value = layer.spline_coeffs.value + 0.5
    zeros = {p: np.zeros_like(param.value) for p, param in model.registry.items()}
    grads = dict(zeros)
    penalties = method.regularize(model, grads, progress=0.0)
    assert penalties.anchor > 0 and penalties.bb > 0
    changed = {p for p in grads if np.any(grads[p] != 0.0)}
    anchor_paths = {p for p in changed if p.startswith("head.")}
    bb_paths = changed - anchor_paths
    assert anchor_paths <= {f"head.{i}.spline_coeffs" for i in range(len(model.head))}
    assert all(p.startswith(("backbone.", "feat_norm.")) for p in bb_paths)


def test_method_registry():
    assert set(METHOD_REGISTRY) == {
        "finetune", "ewc", "si", "kan_cl", "kan_cl_bbewc", "mlp_bbewc", "replay", "kan_cl_replay"
    }
    assert get_method_spec("mlp_bbewc").backbone_ewc
    with pytest.raises(ConfigError):
        get_method_spec("gem")


def test_methods_check_model_compatibility(make_model):
    with pytest.raises(ConfigError):
        ContinualMethod("kan_cl", MethodConfig(), make_model("pure_mlp"), Rng(0))
    with pytest.raises(ConfigError):
        ContinualMethod("kan_cl_bbewc", MethodConfig(), make_model("pure_kan"), Rng(0))


# SI


def test_si_path_integral_tracks_loss_decrease():
    registry = {"w": Parameter(np.array([1.0]))}
    state = SiState(xi=0.1)
    state.start(registry)
    lr = 1e-3
    start_loss = 0.5 * float(registry["w"].value[0] ** 2)
    for _ in range(1000):
        g = registry["w"].value.copy()
        delta = -lr * g
        registry["w"].value = registry["w"].value + delta
        si_accumulate(state, {"w": g}, {"w": delta})
    decrease = start_loss - 0.5 * float(registry["w"].value[0] ** 2)
    assert float(state.omega["w"][0]) == pytest.approx(decrease, rel=2e-3)
    si_consolidate(state, registry)
    assert float(state.big_omega["w"][0]) > 0
    assert si_penalty(registry, state, 1.0)[0] == 0.0


def test_si_without_movement_keeps_importance():
    registry = {"w": Parameter(np.array([1.0, 2.0]))}
    state = SiState()
    state.start(registry)
    si_consolidate(state, registry)
    np.testing.assert_array_equal(state.big_omega["w"], np.zeros(2))
    with pytest.raises(ConfigError):
        SiState(xi=0.0)


# replay


def test_reservoir_keeps_everything_below_capacity():
    buf = ReplayBuffer(10, Rng(0))
    buf.insert_many(np.arange(6, dtype=np.float64).reshape(6, 1), np.arange(6), task_id=0)
    assert len(buf) == 6
    np.testing.assert_array_equal(buf.labels, np.arange(6))


def test_reservoir_retention_is_uniform():
    rng = Rng(1)
    N, trials = 5, 100_000
    counts = np.zeros(N)
    images = np.zeros((N, 1))
    labels = np.arange(N)
    for _ in range(trials):
        buf = ReplayBuffer(1, rng)
        buf.insert_many(images, labels, task_id=0)
        counts[buf.labels[0]] += 1
    assert chisquare(counts).pvalue > 1e-3


def test_replay_sampling():
    buf = ReplayBuffer(4, Rng(2))
    with pytest.raises(BufferEmptyError):
        buf.sample(1, Rng(3))
    buf.insert_many(np.ones((3, 2)), np.array([0, 1, 2]), task_id=1)
    images, labels, tasks = buf.sample(0, Rng(3))
    assert len(labels) == 0 and images.shape == (0, 2)
    images, labels, tasks = buf.sample(2, Rng(3))
    assert images.shape == (2, 2) and len(set(labels.tolist())) == 2 and set(tasks.tolist()) == {1}
    with pytest.raises(ContractViolation):
        buf.sample(5, Rng(3))


# overlap


def test_fisher_overlap():
    rng = Rng(9)
    a, b = rng.uniform(size=6), rng.uniform(size=6)
    out = fisher_overlap([{"p": a}, {"p": b}, {"p": a.copy()}])
    np.testing.assert_allclose(out[0, 1], a @ b / (np.linalg.norm(a) * np.linalg.norm(b)), atol=1e-12)
    assert out[0, 2] == pytest.approx(1.0)
    disjoint = fisher_overlap([{"p": np.array([1.0, 0.0])}, {"p": np.array([0.0, 2.0])}, {"p": np.zeros(2)}])
    assert disjoint[0, 1] == 0.0
    assert np.isnan(disjoint[0, 2])
