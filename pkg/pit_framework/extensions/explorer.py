"""
Design-space exploration: lambda x warmup sweeps, Pareto fronts and reports
"""
import asyncio
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import orjson
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..core.config import NetworkConfig, TrainConfig
from ..core.events import Event, EventType, TrainingCallback
from ..core.layers import build_network, count_params
from ..core.masks import MaskSpec, reachable_configurations
from ..core.seeding import Component, derive_seed
from ..core.trainer import TrainedResult, run_pit
from ..data.dataset import Dataset

logger = logging.getLogger(__name__)

CSV_HEADER = ["lambda", "steps_wu", "seed", "params", "perf", "dilations", "status"]


class SweepError(RuntimeError):
    """Every point of a sweep failed"""


class ReportError(OSError):
    """Report files could not be written or read"""


class SweepConfig(BaseModel):
    """Grid of regularizer strengths and warmup lengths around one seed network"""
    model_config = ConfigDict(extra="forbid")

    lambda_grid: List[float] = Field(min_length=1)
    warmup_grid: List[int] = Field(min_length=1)
    repetitions: int = Field(default=1, ge=1)
    base: TrainConfig = Field(default_factory=TrainConfig)
    network: NetworkConfig
    max_workers: int = Field(default=2, ge=1)

    @field_validator("lambda_grid")
    @classmethod
    def _non_negative_lambdas(cls, values: List[float]) -> List[float]:
        if any(value < 0 for value in values):
            raise ValueError(f"lambda values must be >= 0, got {values}")
        return values

    @field_validator("warmup_grid")
    @classmethod
    def _non_negative_warmups(cls, values: List[int]) -> List[int]:
        if any(value < 0 for value in values):
            raise ValueError(f"warmup steps must be >= 0, got {values}")
        return values

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SweepConfig":
        return cls.model_validate(orjson.loads(Path(path).read_bytes()))


@dataclass
class ParetoPoint:
    """One sweep result: size, validation loss and the architecture that produced them"""
    params: int
    perf: float
    dilations: Tuple[int, ...]
    lambda_: float
    steps_wu: int
    seed: int
    status: str = "ok"
    error: Optional[str] = None
    history: Dict[str, List[float]] = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params,
            "perf": self.perf if math.isfinite(self.perf) else None,
            "dilations": list(self.dilations),
            "lambda": self.lambda_,
            "steps_wu": self.steps_wu,
            "seed": self.seed,
            "status": self.status,
            "error": self.error,
        }


# ============== Sweep ==============

def point_seed(base_seed: int, lambda_index: int, warmup_index: int, repetition: int) -> int:
    return derive_seed(base_seed, Component.SWEEP_POINT, lambda_index, warmup_index, repetition)


def _point_config(base: TrainConfig, lam: float, steps_wu: int, seed: int, tag: str) -> TrainConfig:
    checkpoint_dir = str(Path(base.checkpoint_dir) / tag) if base.checkpoint_dir else None
    return base.model_copy(
        update={"lambda_": lam, "steps_wu": steps_wu, "rng_seed": seed, "checkpoint_dir": checkpoint_dir}
    )


def run_point(network: NetworkConfig, data: Dataset, cfg: TrainConfig) -> ParetoPoint:
    """One independent search; the same seed drives network init and data order"""
    try:
        net = build_network(network, cfg.rng_seed, delta=cfg.delta)
        result: TrainedResult = run_pit(net, data, cfg)
        return ParetoPoint(
            params=result.params,
            perf=result.final_val_loss,
            dilations=result.dilations,
            lambda_=cfg.lambda_,
            steps_wu=cfg.steps_wu,
            seed=cfg.rng_seed,
            history=result.history,
        )
    except Exception as e:
        logger.warning(f"Sweep point lambda={cfg.lambda_} steps_wu={cfg.steps_wu} seed={cfg.rng_seed} failed: {e}")
        return ParetoPoint(
            params=0,
            perf=math.nan,
            dilations=(),
            lambda_=cfg.lambda_,
            steps_wu=cfg.steps_wu,
            seed=cfg.rng_seed,
            status="failed",
            error=str(e),
        )


async def run_sweep(
    cfg: SweepConfig,
    data: Dataset,
    callbacks: Optional[TrainingCallback] = None,
) -> List[ParetoPoint]:
    """
    One run_pit per (lambda, steps_wu, repetition), executed in a bounded
    pool of worker threads. Points come back in grid order.
    """
    callbacks = callbacks or TrainingCallback()
    cfg.network.check(require_pit=True)
    semaphore = asyncio.Semaphore(cfg.max_workers)
    jobs = []
    for li, lam in enumerate(cfg.lambda_grid):
        for wi, steps_wu in enumerate(cfg.warmup_grid):
            for rep in range(cfg.repetitions):
                seed = point_seed(cfg.base.rng_seed, li, wi, rep)
                jobs.append(_point_config(cfg.base, lam, steps_wu, seed, f"point-{li}-{wi}-{rep}"))

    total = len(jobs)
    done = 0
    callbacks.emit(Event(EventType.SWEEP_START, total, metadata={"workers": cfg.max_workers}))
    logger.info(f"Starting sweep of {total} points on {cfg.max_workers} workers")

    async def _run(job: TrainConfig) -> ParetoPoint:
        nonlocal done
        async with semaphore:
            point = await asyncio.to_thread(run_point, cfg.network, data, job)
        done += 1
        logger.info(
            f"Sweep point {done}/{total}: lambda={point.lambda_} steps_wu={point.steps_wu} "
            f"status={point.status} params={point.params} perf={point.perf:.6g}"
        )
        callbacks.emit(Event(EventType.SWEEP_POINT, point.to_dict(), metadata={"done": done, "total": total}))
        return point

    points = list(await asyncio.gather(*(_run(job) for job in jobs)))
    failed = sum(1 for point in points if not point.ok)
    if failed == total:
        raise SweepError(f"All {total} sweep points failed; first error: {points[0].error}")
    callbacks.emit(Event(EventType.SWEEP_COMPLETE, len(points), metadata={"failed": failed}))
    return points


# ============== Pareto analysis ==============

def dominates(a: ParetoPoint, b: ParetoPoint) -> bool:
    """a is no worse on both axes and strictly better on one"""
    return a.params <= b.params and a.perf <= b.perf and (a.params < b.params or a.perf < b.perf)


def pareto_front(points: Sequence[ParetoPoint]) -> List[ParetoPoint]:
    """
    Non-dominated successful points in ascending params. Exact duplicates
    keep the first one seen.
    """
    ok = [point for point in points if point.ok and math.isfinite(point.perf)]
    ordered = sorted(ok, key=lambda point: (point.params, point.perf))
    front: List[ParetoPoint] = []
    best = math.inf
    for point in ordered:
        if point.perf < best:
            front.append(point)
            best = point.perf
    return front


def select_representatives(
    front: Sequence[ParetoPoint],
    reference_params: Optional[int] = None,
) -> Dict[str, ParetoPoint]:
    """
    Named points of a front: fewest parameters (small), best loss (large)
    and the point closest in size to a reference network (medium).
    """
    if not front:
        raise ValueError("Cannot pick representatives from an empty front")
    small = min(front, key=lambda point: point.params)
    large = min(front, key=lambda point: point.perf)
    reference = reference_params if reference_params is not None else large.params
    medium = min(front, key=lambda point: (abs(point.params - reference), point.params))
    return {"small": small, "medium": medium, "large": large}


def search_space_size(network: NetworkConfig) -> int:
    return reachable_configurations([MaskSpec(spec.rf_max) for spec in network.pit_layers()])


# ============== Reports ==============

def _format_dilations(dilations: Sequence[int]) -> str:
    return "|".join(str(d) for d in dilations)


def emit_report(
    points: Sequence[ParetoPoint],
    front: Sequence[ParetoPoint],
    path: Union[str, Path],
    network: Optional[NetworkConfig] = None,
) -> Tuple[Path, Path]:
    """Write points.csv (one row per point) and summary.json (front flags and representatives)"""
    if not points or not front:
        raise ValueError("A report needs at least one point and a non-empty front")
    path = Path(path)
    front_ids = {id(point) for point in front}
    try:
        path.mkdir(parents=True, exist_ok=True)
        table = path / "points.csv"
        with table.open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_HEADER)
            for point in points:
                writer.writerow([
                    repr(point.lambda_),
                    point.steps_wu,
                    point.seed,
                    point.params,
                    repr(point.perf),
                    _format_dilations(point.dilations),
                    point.status,
                ])

        reference = count_params(network) if network is not None else None
        representatives = select_representatives(front, reference)
        summary = {
            "n_points": len(points),
            "n_failed": sum(1 for point in points if not point.ok),
            "n_front": len(front),
            "search_space_size": search_space_size(network) if network is not None else None,
            "seed_params": reference,
            "points": [{**point.to_dict(), "on_front": id(point) in front_ids} for point in points],
            "front": [point.to_dict() for point in front],
            "representatives": {name: point.to_dict() for name, point in representatives.items()},
        }
        summary_path = path / "summary.json"
        summary_path.write_bytes(orjson.dumps(summary, option=orjson.OPT_INDENT_2))
    except OSError as e:
        raise ReportError(f"Cannot write report to {path}: {e}") from e
    logger.info(f"Wrote report with {len(points)} points ({len(front)} on the front) to {path}")
    return table, summary_path


def load_points(csv_path: Union[str, Path]) -> List[ParetoPoint]:
    """Read points back from a points.csv written by emit_report"""
    csv_path = Path(csv_path)
    try:
        with csv_path.open(newline="") as f:
            reader = csv.DictReader(f)
            header = reader.fieldnames
            rows = list(reader)
    except OSError as e:
        raise ReportError(f"Cannot read points from {csv_path}: {e}") from e
    if header != CSV_HEADER:
        raise ReportError(f"{csv_path}: unexpected header {header}")
    return [
        ParetoPoint(
            params=int(row["params"]),
            perf=float(row["perf"]),
            dilations=tuple(int(d) for d in row["dilations"].split("|")) if row["dilations"] else (),
            lambda_=float(row["lambda"]),
            steps_wu=int(row["steps_wu"]),
            seed=int(row["seed"]),
            status=row["status"],
        )
        for row in rows
    ]
