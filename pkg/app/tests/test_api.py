import pytest

from core.config import settings
from services.config_parser import config_from_flat
from services.experiment_runner import ExperimentRunner

API = settings.API_V1_STR


def test_health(test_client):
    response = test_client.get(f"{API}/health/")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "healthy"
    assert "kan_cl_bbewc" in body["methods"]
    assert "split_cifar100_10t" in body["benchmarks"]
    assert body["components"]["experiment_runner"]["details"]["runs"] == 0


def test_metrics(test_client):
    response = test_client.post(f"{API}/metrics/", json={"r_matrix": [[1.0], [0.8, 1.0]]})
    assert response.status_code == 200
    body = response.json()
    assert body["acc"] == pytest.approx(0.9, abs=1e-12)
    assert body["fgt"] == pytest.approx(0.2, abs=1e-12)
    assert body["num_tasks"] == 2


def test_metrics_rejects_incomplete_matrix(test_client):
    response = test_client.post(f"{API}/metrics/", json={"r_matrix": [[1.0], [0.8]]})
    assert response.status_code == 400
    assert response.json()["error"] == "MetricError"
    assert test_client.post(f"{API}/metrics/", json={"r_matrix": []}).status_code == 422


def test_synthetic_probe(test_client):
    response = test_client.post(f"{API}/probe/synthetic", json={})
    assert response.status_code == 200
    body = response.json()
    assert body["rho_bar"] == pytest.approx(0.75)
    assert body["cross_gram_max_at_local_knots"] == 0.0
    assert test_client.post(f"{API}/probe/synthetic", json={"num_outputs": 1}).status_code == 422


def test_runs(test_client, output_root, data_root):
    assert test_client.get(f"{API}/runs/").json()["runs"] == []
    config = config_from_flat({
        "method": "finetune",
        "seeds": "0",
        "architecture.hidden": "4",
        "optimizer.epochs": 1,
        "data.train_per_task": 8,
        "data.test_per_task": 4,
    })
    ExperimentRunner(output_root, data_root).run_experiment(config)
    listing = test_client.get(f"{API}/runs/").json()
    assert listing["runs"] == [{"benchmark": "split_mnist_5t", "method": "finetune"}]
    detail = test_client.get(f"{API}/runs/split_mnist_5t/finetune").json()
    assert detail["aggregate"]["num_seeds"] == 1
    assert detail["summaries"][0]["status"] == "ok"
    assert test_client.get(f"{API}/runs/split_mnist_5t/si").status_code == 404
