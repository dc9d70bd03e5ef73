import json

import numpy as np
import pytest

from cli import main
from core.config import settings
from core.errors import ConfigError
from services import experiment_runner
from services.config_parser import config_echo, config_from_flat, dump_flat, parse_config, parse_flat
from services.experiment_runner import ExperimentRunner, aggregate_summaries
from services.harness import ResultMatrix, acc_metric, fgt_metric

TINY = {
    "benchmark": "split_mnist_5t",
    "method": "kan_cl",
    "seeds": "0,1",
    "architecture.hidden": "4",
    "optimizer.epochs": 1,
    "optimizer.batch_size": 8,
    "data.train_per_task": 16,
    "data.test_per_task": 8,
}


def tiny(**overrides):
    return config_from_flat({**TINY, **overrides})


# configuration


def test_shipped_configs_parse():
    files = sorted(settings.EXPERIMENTS_DIR.glob("*.conf"))
    assert files
    for path in files:
        parse_config(path)


def test_parse_config_resolves_auto_fields():
    config = parse_config(settings.EXPERIMENTS_DIR / "split_mnist_kan_cl.conf")
    assert config.method == "kan_cl"
    assert config.model_kind == "pure_kan"
    assert config.architecture.hidden == [64]
    assert config.method_block.lambda_anchor == 500.0
    assert config.epochs == 4
    assert config.fisher_sample_cap is None


def test_overrides_win_over_the_file():
    config = parse_config(settings.EXPERIMENTS_DIR / "split_mnist_kan_cl.conf", {"method.beta": "0", "seeds": "7"})
    assert config.method_block.beta == 0.0
    assert config.seeds == [7]


def test_defaults_by_benchmark_and_method():
    cifar = config_from_flat({"benchmark": "split_cifar10_5t"})
    assert (cifar.model_kind, cifar.epochs, cifar.fisher_sample_cap) == ("cnn_kan", 10, 2048)
    assert config_from_flat({"benchmark": "split_cifar10_5t", "method": "mlp_bbewc"}).model_kind == "cnn_mlp"
    assert config_from_flat({"method": "kan_cl_bbewc"}).model_kind == "cnn_kan"
    assert config_from_flat({"method": "finetune"}).model_kind == "pure_kan"
    assert config_from_flat({"optimizer.epochs": "auto"}).optimizer.epochs is None


@pytest.mark.parametrize(
    "flat",
    [
        {"method.rho": "1.5"},
        {"method.lambdaa": "3"},
        {"plugins.x": "1"},
        {"method": "gem"},
        {"method": "kan_cl", "architecture.kind": "pure_mlp"},
        {"method": "kan_cl_bbewc", "architecture.kind": "pure_kan"},
        {"seeds": ""},
    ],
)
def test_invalid_configs(flat):
    with pytest.raises(ConfigError):
        config_from_flat(flat)


def test_flat_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_flat("benchmark split_mnist_5t")
    with pytest.raises(ConfigError):
        parse_flat("seeds = 1\nseeds = 2")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.conf")
    assert parse_flat("# comment\n\nmethod = si  # trailing\n") == {"method": "si"}


def test_config_echo_round_trip():
    config = tiny(**{"method.rho": "0.25", "optimizer.betas": "0.8,0.9"})
    assert config_from_flat(config_echo(config)) == config
    assert config_from_flat(parse_flat(dump_flat(config))) == config


# runs


def test_run_experiment_writes_results(tmp_path, data_root):
    outcome = ExperimentRunner(tmp_path, data_root).run_experiment(tiny())
    assert outcome.exit_status == 0
    assert outcome.out_dir == tmp_path / "split_mnist_5t" / "kan_cl"
    accs = []
    for seed in (0, 1):
        seed_dir = outcome.out_dir / f"seed_{seed}"
        R = ResultMatrix.from_csv(seed_dir / "r_matrix.csv")
        assert R.completed_rows() == 5
        summary = json.loads((seed_dir / "summary.json").read_text())
        assert summary["status"] == "ok" and summary["error"] is None
        assert summary["acc"] == pytest.approx(acc_metric(R), abs=1e-12)
        assert summary["fgt"] == pytest.approx(fgt_metric(R), abs=1e-12)
        assert summary["final_accuracies"] == pytest.approx(R.values[-1].tolist())
        assert summary["resolved"] == {"model_kind": "pure_kan", "epochs": 1, "fisher_sample_cap": None}
        assert config_from_flat(summary["config_echo"]) == tiny()
        assert summary["steps"] == 5 * 2
        log = (seed_dir / "train_log.csv").read_text().splitlines()
        assert log[0] == "step,task,ce,anchor,bb,total"
        assert len(log) == 1 + 5
        accs.append(summary["acc"])
    aggregate = json.loads((outcome.out_dir / "aggregate.json").read_text())
    assert aggregate["num_seeds"] == 2 and not aggregate["partial"]
    assert aggregate["acc_mean"] == pytest.approx(np.mean(accs), abs=1e-12)
    assert aggregate["acc_std"] == pytest.approx(np.std(accs), abs=1e-12)


def test_rerun_gives_identical_result_matrix(tmp_path, data_root):
    config = tiny(seeds="0")
    a = ExperimentRunner(tmp_path / "a", data_root).run_experiment(config)
    b = ExperimentRunner(tmp_path / "b", data_root).run_experiment(config)
    assert (a.out_dir / "seed_0" / "r_matrix.csv").read_bytes() == (b.out_dir / "seed_0" / "r_matrix.csv").read_bytes()


def test_missing_data_fails_the_seed_not_the_run(tmp_path):
    outcome = ExperimentRunner(tmp_path / "out", tmp_path / "empty").run_experiment(tiny())
    assert outcome.exit_status == 1
    assert [s.status for s in outcome.seeds] == ["failed", "failed"]
    summary = json.loads((outcome.out_dir / "seed_0" / "summary.json").read_text())
    assert summary["error"]["type"] == "DataMissingError"
    assert "fetch_data" in summary["error"]["message"]
    aggregate = json.loads((outcome.out_dir / "aggregate.json").read_text())
    assert aggregate["partial"] and aggregate["acc_mean"] is None
    assert [f["seed"] for f in aggregate["failures"]] == [0, 1]


def test_aggregate_skips_failed_seeds():
    agg = aggregate_summaries([
        {"seed": 0, "status": "ok", "acc": 0.5, "fgt": 0.1, "method": "si", "benchmark": "b"},
        {"seed": 1, "status": "ok", "acc": 0.7, "fgt": 0.3},
        {"seed": 2, "status": "failed", "error": {"type": "NonFiniteError", "message": "nan"}},
    ])
    assert agg["seeds"] == [0, 1] and agg["partial"]
    assert agg["acc_mean"] == pytest.approx(0.6) and agg["acc_std"] == pytest.approx(0.1)
    assert agg["failures"] == [{"seed": 2, "type": "NonFiniteError", "message": "nan"}]


def test_resume_after_interruption_matches_uninterrupted_run(tmp_path, data_root, monkeypatch):
    config = tiny(seeds="0", **{"output.checkpoints": "true", "output.resume": "true"})
    reference = ExperimentRunner(tmp_path / "ref", data_root).run_experiment(config)

    real_train_task = experiment_runner.train_task

    def interrupted(model, task, *args, **kwargs):
        if task.index == 2:
            raise RuntimeError("interrupted")
        return real_train_task(model, task, *args, **kwargs)

    runner = ExperimentRunner(tmp_path / "resumed", data_root)
    monkeypatch.setattr(experiment_runner, "train_task", interrupted)
    assert runner.run_experiment(config).exit_status == 1
    seed_dir = runner.experiment_dir(config) / "seed_0"
    assert ResultMatrix.from_csv(seed_dir / "r_matrix.csv").completed_rows() == 2

    monkeypatch.setattr(experiment_runner, "train_task", real_train_task)
    assert runner.run_experiment(config).exit_status == 0
    ref_dir = reference.out_dir / "seed_0"
    for name in ("r_matrix.csv", "train_log.csv"):
        assert (seed_dir / name).read_text() == (ref_dir / name).read_text()


def test_sweep_writes_one_row_per_value_and_seed(tmp_path, data_root):
    runner = ExperimentRunner(tmp_path, data_root)
    config = tiny(seeds="0")
    outcomes = runner.run_sweep(config, "method.lambda", ["0", "50"])
    assert len(outcomes) == 2
    sweep_dir = runner.experiment_dir(config) / "sweep_method.lambda"
    lines = (sweep_dir / "sweep.csv").read_text().splitlines()
    assert lines[0] == "value,seed,acc,fgt"
    assert [line.split(",")[:2] for line in lines[1:]] == [["0", "0"], ["50", "0"]]
    assert (sweep_dir / "value_50" / "split_mnist_5t" / "kan_cl" / "aggregate.json").exists()
    assert runner.run_sweep(config, "method.lambda", []) == []
    with pytest.raises(ConfigError):
        runner.run_sweep(config, "method.nope", ["1"])


def test_list_and_load_runs(tmp_path, data_root):
    runner = ExperimentRunner(tmp_path, data_root)
    assert runner.list_runs() == []
    runner.run_experiment(tiny(seeds="0"))
    assert runner.list_runs() == [{"benchmark": "split_mnist_5t", "method": "kan_cl"}]
    run = runner.load_run("split_mnist_5t", "kan_cl")
    assert run["aggregate"]["num_seeds"] == 1 and len(run["summaries"]) == 1
    assert runner.load_run("split_mnist_5t", "si") is None


# command line


def test_cli_metrics(tmp_path, capsys):
    R = ResultMatrix.from_rows([[1.0], [0.8, 1.0]])
    path = R.to_csv(tmp_path / "r_matrix.csv")
    assert main(["metrics", "--r-matrix", str(path)]) == 0
    out = capsys.readouterr().out
    assert "ACC 0.900000" in out and "FGT 0.200000" in out


def test_cli_reports_config_errors(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.conf")]) == 2
    assert "does not exist" in capsys.readouterr().err


def test_cli_run(tmp_path, data_root, capsys):
    args = ["run", "--method", "finetune", "--seeds", "0", "--out", str(tmp_path), "--data-root", str(data_root)]
    for key, value in TINY.items():
        if key not in ("method", "seeds", "benchmark"):
            args += ["--set", f"{key}={value}"]
    assert main(args) == 0
    assert (tmp_path / "split_mnist_5t" / "finetune" / "aggregate.json").exists()
    assert "ACC" in capsys.readouterr().out


def test_cli_synthetic_probe(capsys):
    assert main(["probe", "--synthetic"]) == 0
    assert "rho_bar: 0.75" in capsys.readouterr().out
