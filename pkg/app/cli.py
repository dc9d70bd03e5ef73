"""Command line entry point: run, sweep, probe, metrics, serve"""
import argparse
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from core.config import settings
from core.errors import SplineCLError
from core.logging import get_logger
from services.config_parser import parse_config
from services.experiment_runner import ExperimentRunner
from services.harness import ResultMatrix, acc_metric, fgt_metric
from services.ntk_probe import kan_mlp_ratio, run_probe, synthetic_disjoint_support

logger = get_logger("cli")


def _split(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _overrides(args: argparse.Namespace) -> Dict[str, str]:
    """--method/--benchmark/--seeds/--out and every --set key=value, as dotted keys"""
    out: Dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise SplineCLError(f"--set expects key=value, got '{item}'")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    for key, attr in (("method", "method"), ("benchmark", "benchmark"), ("seeds", "seeds"), ("output.dir", "out")):
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    return out


def cmd_run(args: argparse.Namespace) -> int:
    config = parse_config(args.config, _overrides(args))
    outcome = ExperimentRunner(data_root=args.data_root).run_experiment(config)
    agg = outcome.aggregate
    if agg["num_seeds"]:
        print(f"ACC {agg['acc_mean']:.4f} +- {agg['acc_std']:.4f}  FGT {agg['fgt_mean']:.4f} +- {agg['fgt_std']:.4f}")
    for failure in agg["failures"]:
        print(f"seed {failure['seed']} failed: {failure.get('type')}: {failure.get('message')}", file=sys.stderr)
    print(f"results in {outcome.out_dir}")
    return outcome.exit_status


def cmd_sweep(args: argparse.Namespace) -> int:
    config = parse_config(args.config, _overrides(args))
    outcomes = ExperimentRunner(data_root=args.data_root).run_sweep(config, args.axis, _split(args.values))
    return 0 if all(o.exit_status == 0 for o in outcomes) else 1


def cmd_probe(args: argparse.Namespace) -> int:
    if args.synthetic:
        report = synthetic_disjoint_support(grid_intervals=args.grid, order=args.order, n_per_task=args.n)
        for key, value in asdict(report).items():
            print(f"{key}: {value}")
        return 0
    if not args.benchmark:
        raise SplineCLError("probe needs --benchmark (or --synthetic)")
    out_dir = Path(args.out) if args.out else settings.OUTPUT_ROOT / args.benchmark / "probe"
    reports = run_probe(
        args.benchmark,
        head_types=_split(args.heads),
        n_per_task=args.n,
        seeds=range(args.seeds),
        all_pairs=args.all_pairs,
        grid=args.grid,
        order=args.order,
        out_dir=out_dir,
        data_root=args.data_root,
        fisher_overlap_csv=args.fisher_overlap,
    )
    heads = {r.head for r in reports}
    if {"kan", "mlp"} <= heads:
        print(f"KAN/MLP normalized cross-task NTK ratio: {kan_mlp_ratio(reports):.4f}")
    print(f"report in {out_dir / 'ntk_report.csv'}")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    R = ResultMatrix.from_csv(args.r_matrix)
    print(f"T {R.num_tasks}  ACC {acc_metric(R):.6f}  FGT {fgt_metric(R):.6f}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("main:app", host=args.host or settings.HOST, port=args.port or settings.PORT, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splinecl", description=settings.PROJECT_DESCRIPTION)
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key = value file")
        p.add_argument("--method")
        p.add_argument("--benchmark")
        p.add_argument("--seeds", help="comma separated")
        p.add_argument("--out", help="output directory (default: settings.OUTPUT_ROOT)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="any dotted config key")
        p.add_argument("--data-root", help="dataset cache root (default: settings.DATA_ROOT)")

    run = sub.add_parser("run", help="train one method on one benchmark over seeds")
    experiment_args(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="one run per value of a config key")
    experiment_args(sweep)
    sweep.add_argument("--axis", required=True, help="dotted key, e.g. method.rho")
    sweep.add_argument("--values", required=True, help="comma separated")
    sweep.set_defaults(func=cmd_sweep)

    probe = sub.add_parser("probe", help="cross-task NTK of KAN and MLP heads at initialization")
    probe.add_argument("--benchmark")
    probe.add_argument("--heads", default="kan,mlp")
    probe.add_argument("--n", type=int, default=64, help="samples per task")
    probe.add_argument("--seeds", type=int, default=3, help="number of seeds (0..n-1)")
    probe.add_argument("--all-pairs", action="store_true")
    probe.add_argument("--grid", type=int, default=5)
    probe.add_argument("--order", type=int, default=3)
    probe.add_argument("--out")
    probe.add_argument("--data-root")
    probe.add_argument("--fisher-overlap", action="store_true", help="also write fisher_overlap.csv")
    probe.add_argument("--synthetic", action="store_true", help="disjoint-support construction, no data")
    probe.set_defaults(func=cmd_probe)

    metrics = sub.add_parser("metrics", help="ACC/FGT from an r_matrix.csv")
    metrics.add_argument("--r-matrix", required=True)
    metrics.set_defaults(func=cmd_metrics)

    serve = sub.add_parser("serve", help="start the HTTP API")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SplineCLError as exc:
        logger.error(f"{type(exc).__name__}: {exc.message}")
        print(f"error: {exc.message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
