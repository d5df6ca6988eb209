"""
Command-line entry points: train, sweep, export, gradcheck, gen-data, report
"""
import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import orjson

from .core.config import NetworkConfig, TrainConfig
from .core.gradcheck import run_gradcheck_suite
from .core.layers import build_network, count_params, export_extracted
from .core.trainer import run_pit
from .data.dataset import read_dataset, write_dataset
from .data.synthetic import generate_multiscale_dataset, generate_teacher_dataset, teacher_config
from .extensions.checkpoint import load_checkpoint
from .extensions.explorer import SweepConfig, emit_report, load_points, pareto_front, run_sweep
from .extensions.storage import run_summary, save_bundle, save_summary

logger = logging.getLogger(__name__)

# CLI flag destination -> TrainConfig field
_TRAIN_FLAGS = {
    "lambda_": "lambda",
    "seed": "rng_seed",
    "steps_wu": "steps_wu",
    "steps_ft": "steps_ft",
    "batch_size": "batch_size",
    "lr": "learning_rate",
    "patience": "patience_epochs",
    "max_epochs": "max_epochs",
    "weight_decay": "weight_decay",
    "delta": "delta",
}


def _normalize(values: Dict[str, Any]) -> Dict[str, Any]:
    return {("lambda" if key == "lambda_" else key): value for key, value in values.items()}


def resolve_train_config(
    file_values: Optional[Dict[str, Any]] = None,
    flag_values: Optional[Dict[str, Any]] = None,
) -> TrainConfig:
    """Command-line flags override config-file values, which override model defaults"""
    merged = _normalize(file_values or {})
    merged.update({key: value for key, value in _normalize(flag_values or {}).items() if value is not None})
    return TrainConfig.model_validate(merged)


def _float_list(raw: str) -> List[float]:
    return [float(item) for item in raw.split(",") if item.strip()]


def _int_list(raw: str) -> List[int]:
    return [int(item) for item in raw.split(",") if item.strip()]


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="Network config JSON")
    parser.add_argument("--data", required=True, help="PITD dataset file")
    parser.add_argument("--train-config", help="TrainConfig JSON (flags override it)")
    parser.add_argument("--lambda", dest="lambda_", type=float, help="Size regularizer strength")
    parser.add_argument("--seed", type=int, help="Global seed (network init and data order)")
    parser.add_argument("--steps-wu", dest="steps_wu", type=int, help="Warmup steps")
    parser.add_argument("--steps-ft", dest="steps_ft", type=int, help="Fine-tune step cap")
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--lr", type=float, help="Learning rate")
    parser.add_argument("--patience", type=int, help="Early-stop patience in epochs")
    parser.add_argument("--max-epochs", dest="max_epochs", type=int, help="Cap on pruning epochs")
    parser.add_argument("--weight-decay", dest="weight_decay", type=float)
    parser.add_argument("--delta", type=float, help="Binarization threshold")
    parser.add_argument("--out", default="runs/latest", help="Output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pit", description="Differentiable dilation search for TCNs")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Run one search from a seed network")
    _add_train_flags(train)

    sweep = sub.add_parser("sweep", help="Sweep lambda and warmup, write a Pareto report")
    _add_train_flags(sweep)
    sweep.add_argument("--sweep-config", help="SweepConfig JSON (grids, repetitions, workers)")
    sweep.add_argument("--lambdas", type=_float_list, help="Comma-separated lambda grid")
    sweep.add_argument("--warmups", type=_int_list, help="Comma-separated warmup grid")
    sweep.add_argument("--repetitions", type=int)
    sweep.add_argument("--workers", type=int)

    export = sub.add_parser("export", help="Export the compact network of a finished run")
    export.add_argument("--checkpoint", required=True, help="Checkpoint or run directory")
    export.add_argument("--out", required=True, help="Bundle directory")

    gradcheck = sub.add_parser("gradcheck", help="Finite-difference check of every differentiable op")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--tol", type=float, default=1e-4)

    gen = sub.add_parser("gen-data", help="Generate a synthetic dataset")
    gen_sub = gen.add_subparsers(dest="generator", required=True)
    teacher = gen_sub.add_parser("teacher", help="Teacher-student regression")
    teacher.add_argument("--rf-max", dest="rf_max", type=int, default=9)
    teacher.add_argument("--dilation", type=int, default=4)
    teacher.add_argument("--channels", type=int, default=1)
    teacher.add_argument("--teacher-config", help="Teacher NetworkConfig JSON (overrides the 1-layer teacher)")
    multi = gen_sub.add_parser("multiscale", help="Multi-scale periodic multilabel task")
    multi.add_argument("--periods", type=_int_list, default=[4, 32])
    for p in (teacher, multi):
        p.add_argument("--out", required=True, help="PITD file to write")
        p.add_argument("--n", type=int, default=2000)
        p.add_argument("--T", dest="T", type=int, default=64)
        p.add_argument("--noise", type=float, default=None)
        p.add_argument("--seed", type=int, default=0)

    report = sub.add_parser("report", help="Re-extract the front from a previous sweep")
    report.add_argument("--points", required=True, help="points.csv of a sweep")
    report.add_argument("--out", required=True, help="Report directory")
    report.add_argument("--config", help="Seed network config (for sizes in the summary)")
    return parser


# ============== Commands ==============

def _train_config(args: argparse.Namespace) -> TrainConfig:
    file_values = orjson.loads(Path(args.train_config).read_bytes()) if args.train_config else {}
    flags = {field: getattr(args, dest) for dest, field in _TRAIN_FLAGS.items()}
    return resolve_train_config(file_values, flags)


def cmd_train(args: argparse.Namespace) -> int:
    network = NetworkConfig.load(args.config)
    data = read_dataset(args.data)
    out = Path(args.out)
    cfg = _train_config(args)
    if cfg.checkpoint_dir is None:
        cfg = cfg.model_copy(update={"checkpoint_dir": str(out / "checkpoints")})

    net = build_network(network, cfg.rng_seed, delta=cfg.delta)
    result = run_pit(net, data, cfg)
    summary_path = save_summary(run_summary(result, network, cfg.lambda_, cfg.rng_seed), out / "summary.json")
    print(f"✅ dilations={'|'.join(map(str, result.dilations))} params={result.params} "
          f"(seed {count_params(network)}) val_loss={result.final_val_loss:.6g}")
    print(f"   checkpoint: {result.checkpoint_path}")
    print(f"   summary:    {summary_path}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    network = NetworkConfig.load(args.config)
    data = read_dataset(args.data)
    out = Path(args.out)
    values: Dict[str, Any] = orjson.loads(Path(args.sweep_config).read_bytes()) if args.sweep_config else {}
    values.pop("network", None)
    base_file = values.pop("base", {})
    if args.train_config:
        base_file = {**base_file, **orjson.loads(Path(args.train_config).read_bytes())}
    flags = {field: getattr(args, dest) for dest, field in _TRAIN_FLAGS.items()}
    base = resolve_train_config(base_file, flags)

    overrides = {
        "lambda_grid": args.lambdas,
        "warmup_grid": args.warmups,
        "repetitions": args.repetitions,
        "max_workers": args.workers,
    }
    values.update({key: value for key, value in overrides.items() if value is not None})
    values.setdefault("lambda_grid", [base.lambda_])
    values.setdefault("warmup_grid", [base.steps_wu])
    cfg = SweepConfig.model_validate({**values, "base": base.to_dict(), "network": network.model_dump(mode="json")})

    points = _run_async(run_sweep(cfg, data))
    front = pareto_front(points)
    table, summary = emit_report(points, front, out, network=network)
    print(f"✅ {len(points)} points, {len(front)} on the front")
    for point in front:
        print(f"   params={point.params:>8d} perf={point.perf:.6g} dilations={'|'.join(map(str, point.dilations))} "
              f"lambda={point.lambda_}")
    print(f"   report: {table}, {summary}")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    net = checkpoint.restore_network()
    model = export_extracted(net)
    path = save_bundle(model, args.out)
    print(f"✅ exported dilations={'|'.join(map(str, model.dilations))} params={count_params(model)} to {path}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    reports = run_gradcheck_suite(seed=args.seed, tol=args.tol)
    width = max(len(report.name) for report in reports)
    for report in reports:
        mark = "✅" if report.passed else "❌"
        print(f"{mark} {report.name:<{width}}  max rel error {report.max_rel_error:.3e}")
    return 0 if all(report.passed for report in reports) else 1


def cmd_gen_data(args: argparse.Namespace) -> int:
    if args.generator == "teacher":
        cfg = (
            NetworkConfig.load(args.teacher_config)
            if args.teacher_config
            else teacher_config(args.rf_max, args.dilation, args.channels)
        )
        noise = 0.01 if args.noise is None else args.noise
        dataset = generate_teacher_dataset(cfg, args.n, args.T, noise, args.seed)
    else:
        noise = 0.1 if args.noise is None else args.noise
        dataset = generate_multiscale_dataset(args.periods, args.n, args.T, args.seed, noise)
    path = write_dataset(dataset, args.out)
    print(f"✅ wrote {len(dataset)} sequences to {path}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    points = load_points(args.points)
    network = NetworkConfig.load(args.config) if args.config else None
    front = pareto_front(points)
    if not front:
        print("❌ no successful points in the table", file=sys.stderr)
        return 1
    table, summary = emit_report(points, front, args.out, network=network)
    print(f"✅ {len(front)} of {len(points)} points on the front; report in {table.parent}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "sweep": cmd_sweep,
    "export": cmd_export,
    "gradcheck": cmd_gradcheck,
    "gen-data": cmd_gen_data,
    "report": cmd_report,
}


def _run_async(coro):
    """Run on uvloop when it is installed"""
    try:
        import uvloop
    except ImportError:
        return asyncio.run(coro)
    return uvloop.run(coro)


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments and run a subcommand; returns the process exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        print(f"❌ {args.command} failed: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
