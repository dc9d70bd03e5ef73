"""Seed orchestration, result emission, checkpoint resume and single-axis sweeps"""
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from cl.methods import ContinualMethod
from core.config import settings
from core.errors import ConfigError
from core.logging import get_logger
from models.experiment import ExperimentConfig, ModelSpec
from nn.checkpoint import load_checkpoint, save_checkpoint, strip_prefix, with_prefix
from nn.model import build_model
from nn.optim import Adam
from numerics.rng import Rng
from services.config_parser import config_echo, config_from_flat
from services.harness import (
    ResultMatrix,
    acc_metric,
    build_stream,
    evaluate,
    fgt_metric,
    post_task_hooks,
    train_task,
)
from utils.helpers import load_csv_rows, load_json_file, save_csv_rows, save_json_file

logger = get_logger("services.experiment_runner")

TRAIN_LOG_COLUMNS = ("step", "task", "ce", "anchor", "bb", "total")
SWEEP_COLUMNS = ("value", "seed", "acc", "fgt")
CHECKPOINT_FILE = "checkpoint.npz"


@dataclass
class SeedOutcome:
    seed: int
    status: str
    out_dir: Path
    acc: Optional[float] = None
    fgt: Optional[float] = None
    final_accuracies: List[float] = field(default_factory=list)
    wall_clock_s: float = 0.0
    steps: int = 0
    error: Optional[Dict[str, str]] = None


@dataclass
class RunOutcome:
    out_dir: Path
    seeds: List[SeedOutcome]
    aggregate: Dict[str, Any]

    @property
    def exit_status(self) -> int:
        return 0 if all(s.status == "ok" for s in self.seeds) else 1


def aggregate_summaries(summaries: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    """
    Mean and population std of ACC/FGT over successful seeds

    Args:
        summaries: per-seed summary dicts as written to summary.json

    Returns:
        Dict: aggregate.json payload; `partial` is set when any seed failed
    """
    ok = [s for s in summaries if s.get("status") == "ok"]
    failures = [
        {"seed": s["seed"], **(s.get("error") or {})} for s in summaries if s.get("status") != "ok"
    ]
    out: Dict[str, Any] = {
        "seeds": [s["seed"] for s in ok],
        "num_seeds": len(ok),
        "failures": failures,
        "partial": bool(failures),
    }
    if summaries:
        out["method"] = summaries[0].get("method")
        out["benchmark"] = summaries[0].get("benchmark")
    for metric in ("acc", "fgt"):
        values = np.array([s[metric] for s in ok], dtype=np.float64)
        out[f"{metric}_mean"] = float(values.mean()) if values.size else None
        out[f"{metric}_std"] = float(values.std()) if values.size else None
    return out


class ExperimentRunner:
    """
    Runs experiments described by ExperimentConfig

    Output layout: <out>/<benchmark>/<method>/seed_<s>/{r_matrix.csv, summary.json,
    train_log.csv, checkpoint.npz} and <out>/<benchmark>/<method>/aggregate.json
    """

    def __init__(self, output_root: Union[str, Path, None] = None, data_root: Union[str, Path, None] = None):
        self.output_root = Path(output_root) if output_root else Path(settings.OUTPUT_ROOT)
        self.data_root = Path(data_root) if data_root else None
        logger.debug(f"ExperimentRunner writing under {self.output_root}")

    def experiment_dir(self, config: ExperimentConfig) -> Path:
        root = Path(config.output.dir) if config.output.dir else self.output_root
        return root / config.benchmark / config.method

    def run_experiment(self, config: ExperimentConfig) -> RunOutcome:
        """
        Run every seed of `config`; a failing seed is recorded and the rest continue

        Returns:
            RunOutcome: per-seed outcomes, the aggregate and exit_status (0 only if all seeds succeed)
        """
        out_dir = self.experiment_dir(config)
        logger.info(f"running {config.method} on {config.benchmark} ({config.protocol}) for seeds {config.seeds}")
        outcomes = [self.run_seed(config, seed, out_dir / f"seed_{seed}") for seed in config.seeds]
        summaries = [load_json_file(o.out_dir / "summary.json", {}) for o in outcomes]
        aggregate = aggregate_summaries(summaries)
        save_json_file(out_dir / "aggregate.json", aggregate)
        if aggregate["partial"]:
            logger.warning(f"{len(aggregate['failures'])} of {len(outcomes)} seeds failed; aggregate is partial")
        if aggregate["num_seeds"]:
            logger.info(
                f"{config.method} on {config.benchmark}: ACC {aggregate['acc_mean']:.4f} +- {aggregate['acc_std']:.4f}, "
                f"FGT {aggregate['fgt_mean']:.4f} +- {aggregate['fgt_std']:.4f}"
            )
        return RunOutcome(out_dir, outcomes, aggregate)

    def run_seed(self, config: ExperimentConfig, seed: int, out_dir: Path) -> SeedOutcome:
        start = time.perf_counter()
        outcome = SeedOutcome(seed=seed, status="ok", out_dir=out_dir)
        try:
            R, log_rows = self._train_seed(config, seed, out_dir)
            outcome.acc = acc_metric(R)
            outcome.fgt = fgt_metric(R)
            outcome.final_accuracies = [float(v) for v in R.values[-1]]
            outcome.steps = int(log_rows[-1]["step"]) if log_rows else 0
        except Exception as exc:
            outcome.status = "failed"
            outcome.error = {"type": type(exc).__name__, "message": str(exc)}
            logger.error(f"seed {seed} failed: {type(exc).__name__}: {exc}")
        outcome.wall_clock_s = time.perf_counter() - start
        self._write_summary(config, outcome)
        return outcome

    def _train_seed(self, config: ExperimentConfig, seed: int, out_dir: Path):
        rng = Rng(seed)
        stream = build_stream(
            config.benchmark,
            config.data.num_tasks,
            rng.child("stream"),
            config.protocol,
            config.data,
            self.data_root,
        )
        model = build_model(ModelSpec.from_experiment(config, stream.num_classes, stream.input_shape, seed))
        method = ContinualMethod(
            config.method, config.method_block, model, rng.child("method"), config.fisher_sample_cap
        )
        opt = config.optimizer
        optimizer = Adam(opt.lr, tuple(opt.betas), opt.eps)
        R = ResultMatrix(len(stream))
        log_rows: List[Dict[str, Any]] = []
        first_task = 0

        checkpoint = out_dir / CHECKPOINT_FILE
        if config.output.resume and checkpoint.exists():
            first_task = self._restore(checkpoint, model, method, R)
            log_rows = [
                {k: (int(v) if k in ("step", "task") else float(v)) for k, v in row.items()}
                for row in load_csv_rows(out_dir / "train_log.csv")
                if int(row["task"]) < first_task
            ]
            logger.info(f"seed {seed}: resuming after task {first_task - 1}")

        for task in stream.tasks[first_task:]:
            offset = int(log_rows[-1]["step"]) if log_rows else 0
            record = train_task(
                model, task, method, optimizer, config.epochs, opt.batch_size, rng, stream, step_offset=offset
            )
            log_rows.extend(record.rows)
            post_task_hooks(model, task, method)
            R.record(task.index, evaluate(model, stream, task.index))
            R.to_csv(out_dir / "r_matrix.csv")
            save_csv_rows(out_dir / "train_log.csv", TRAIN_LOG_COLUMNS, log_rows)
            if config.output.checkpoints:
                arrays = {**with_prefix("model.", model.snapshot()), **method.state_arrays(), "results.R": R.values}
                save_checkpoint(checkpoint, arrays, config_echo(config))
        return R, log_rows

    def _restore(self, checkpoint: Path, model, method: ContinualMethod, R: ResultMatrix) -> int:
        arrays, _ = load_checkpoint(checkpoint)
        model.load_state(strip_prefix("model.", arrays))
        method.load_state_arrays(arrays)
        stored = arrays["results.R"]
        if stored.shape != R.values.shape:
            raise ConfigError(
                f"checkpoint {checkpoint} holds a {stored.shape[0]}-task result matrix, run has {R.num_tasks}"
            )
        R.values[...] = stored
        return R.completed_rows()

    def _write_summary(self, config: ExperimentConfig, outcome: SeedOutcome) -> None:
        summary = {
            "method": config.method,
            "benchmark": config.benchmark,
            "protocol": config.protocol,
            "seed": outcome.seed,
            "status": outcome.status,
            "acc": outcome.acc,
            "fgt": outcome.fgt,
            "final_accuracies": outcome.final_accuracies,
            "wall_clock_s": outcome.wall_clock_s,
            "steps": outcome.steps,
            "error": outcome.error,
            "config_echo": config_echo(config),
            "resolved": {
                "model_kind": config.model_kind,
                "epochs": config.epochs,
                "fisher_sample_cap": config.fisher_sample_cap,
            },
        }
        save_json_file(outcome.out_dir / "summary.json", summary)

    def run_sweep(self, config: ExperimentConfig, axis: str, values: Sequence[Any]) -> List[RunOutcome]:
        """
        One experiment per value of a single dotted config key

        Args:
            config: base experiment
            axis: dotted key such as "method.rho" or "architecture.grid"
            values: values for the axis (strings or native)

        Returns:
            List[RunOutcome]: one per value; sweep.csv lists (value, seed, acc, fgt)
        """
        if not values:
            logger.warning(f"sweep over {axis} has no values; nothing to run")
            return []
        echo = config_echo(config)
        if axis not in echo:
            raise ConfigError(f"unknown sweep axis '{axis}'", {"known": sorted(echo)})
        sweep_dir = self.experiment_dir(config) / f"sweep_{axis}"
        outcomes: List[RunOutcome] = []
        rows: List[Dict[str, Any]] = []
        for value in values:
            point = config_from_flat({**echo, axis: value, "output.dir": str(sweep_dir / f"value_{value}")})
            outcome = self.run_experiment(point)
            outcomes.append(outcome)
            rows.extend(
                {"value": value, "seed": s.seed, "acc": s.acc, "fgt": s.fgt}
                for s in outcome.seeds
                if s.status == "ok"
            )
        save_csv_rows(sweep_dir / "sweep.csv", SWEEP_COLUMNS, rows)
        logger.info(f"sweep over {axis} finished: {len(values)} values, {len(rows)} successful seed runs")
        return outcomes

    def list_runs(self) -> List[Dict[str, str]]:
        """Every <benchmark>/<method> under the output root with an aggregate.json"""
        if not self.output_root.exists():
            return []
        return [
            {"benchmark": path.parent.parent.name, "method": path.parent.name}
            for path in sorted(self.output_root.glob("*/*/aggregate.json"))
        ]

    def load_run(self, benchmark: str, method: str) -> Optional[Dict[str, Any]]:
        run_dir = self.output_root / benchmark / method
        aggregate = load_json_file(run_dir / "aggregate.json")
        if aggregate is None:
            return None
        summaries = [load_json_file(p) for p in sorted(run_dir.glob("seed_*/summary.json"))]
        return {"aggregate": aggregate, "summaries": summaries}
