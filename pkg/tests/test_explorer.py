"""
Tests for sweeps, Pareto extraction and reports
"""
import math

import numpy as np
import orjson
import pytest

from pit_framework.core.config import NetworkConfig, PitConvSpec, TrainConfig
from pit_framework.core.events import EventType, TrainingCallback
from pit_framework.core.layers import build_network
from pit_framework.core.trainer import run_pit
from pit_framework.extensions.explorer import (
    CSV_HEADER,
    ParetoPoint,
    ReportError,
    SweepConfig,
    SweepError,
    dominates,
    emit_report,
    load_points,
    pareto_front,
    point_seed,
    run_point,
    run_sweep,
    search_space_size,
    select_representatives,
)


def _point(params, perf, status="ok", **kwargs):
    values = dict(dilations=(1,), lambda_=0.0, steps_wu=0, seed=0)
    values.update(kwargs)
    return ParetoPoint(params=params, perf=perf, status=status, **values)


def _base(**overrides) -> TrainConfig:
    values = dict(steps_ft=2, batch_size=8, patience_epochs=2, max_epochs=2, rng_seed=11)
    values.update(overrides)
    return TrainConfig(**values)


def _brute_force_front(points):
    ok = [p for p in points if p.ok and math.isfinite(p.perf)]
    survivors = [p for p in ok if not any(dominates(q, p) for q in ok)]
    unique, seen = [], set()
    for p in survivors:
        if (p.params, p.perf) not in seen:
            seen.add((p.params, p.perf))
            unique.append(p)
    return sorted(unique, key=lambda p: (p.params, p.perf))


class TestSweepConfig:
    def test_grids_must_be_non_empty(self, tiny_config):
        with pytest.raises(ValueError):
            SweepConfig(lambda_grid=[], warmup_grid=[0], network=tiny_config)

    def test_negative_values_rejected(self, tiny_config):
        with pytest.raises(ValueError):
            SweepConfig(lambda_grid=[-1.0], warmup_grid=[0], network=tiny_config)
        with pytest.raises(ValueError):
            SweepConfig(lambda_grid=[0.0], warmup_grid=[-5], network=tiny_config)

    def test_base_reads_lambda_key(self, tiny_config):
        cfg = SweepConfig.model_validate(
            {
                "lambda_grid": [0.0],
                "warmup_grid": [0],
                "base": {"lambda": 0.3, "batch_size": 16},
                "network": tiny_config.model_dump(mode="json"),
            }
        )
        assert cfg.base.lambda_ == 0.3
        assert cfg.base.batch_size == 16

    def test_point_seeds_are_distinct(self):
        seeds = {point_seed(0, li, wi, rep) for li in range(3) for wi in range(3) for rep in range(3)}
        assert len(seeds) == 27


class TestParetoFront:
    def test_small_example(self):
        a, b, c, d = _point(100, 0.5), _point(200, 0.4), _point(150, 0.6), _point(300, 0.4)
        assert pareto_front([a, b, c, d]) == [a, b]

    def test_duplicates_keep_first(self):
        first, second = _point(100, 0.5, seed=1), _point(100, 0.5, seed=2)
        front = pareto_front([first, second])
        assert len(front) == 1
        assert front[0] is first

    def test_failed_points_ignored(self):
        good = _point(100, 0.5)
        front = pareto_front([_point(0, math.nan, status="failed"), good])
        assert front == [good]

    def test_matches_brute_force(self, rng):
        points = [
            _point(int(rng.integers(1, 60)), float(np.round(rng.uniform(0, 1), 2)), seed=i)
            for i in range(1000)
        ]
        front = pareto_front(points)
        expected = _brute_force_front(points)
        assert [id(p) for p in front] == [id(p) for p in expected]
        params = [p.params for p in front]
        assert params == sorted(params)

    def test_representatives(self):
        front = [_point(10, 0.9), _point(50, 0.5), _point(200, 0.1)]
        picks = select_representatives(front, reference_params=60)
        assert picks["small"].params == 10
        assert picks["large"].params == 200
        assert picks["medium"].params == 50
        assert select_representatives(front)["medium"].params == 200
        with pytest.raises(ValueError):
            select_representatives([])

    def test_search_space_size(self, config_dir):
        network = NetworkConfig.load(config_dir / "multiscale_seed.json")
        assert search_space_size(network) == 6 ** 3


class TestReport:
    def test_table_and_summary(self, tmp_path, tiny_config):
        points = [
            _point(10, 0.2, dilations=(1,), lambda_=0.0),
            _point(4, 0.3, dilations=(4,), lambda_=0.1),
            _point(10, 0.25, dilations=(1,), lambda_=0.0, seed=1),
            _point(0, math.nan, status="failed", dilations=(), lambda_=1.0),
        ]
        front = pareto_front(points)
        table, summary_path = emit_report(points, front, tmp_path / "report", network=tiny_config)

        lines = table.read_text().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert len(lines) == 5
        assert lines[2] == "0.1,0,0,4,0.3,4,ok"

        summary = orjson.loads(summary_path.read_bytes())
        assert summary["n_points"] == 4
        assert summary["n_failed"] == 1
        assert [p["on_front"] for p in summary["points"]] == [True, True, False, False]
        assert summary["search_space_size"] == 4
        assert summary["seed_params"] == 10
        assert summary["representatives"]["small"]["params"] == 4
        assert summary["points"][3]["perf"] is None

    def test_points_read_back(self, tmp_path):
        points = [_point(12, 0.123456789012345, dilations=(2, 4), lambda_=1e-6, steps_wu=100, seed=7)]
        table, _ = emit_report(points, pareto_front(points), tmp_path)
        loaded = load_points(table)
        assert loaded[0].perf == points[0].perf
        assert loaded[0].dilations == (2, 4)
        assert loaded[0].lambda_ == 1e-6
        assert loaded[0].steps_wu == 100

    def test_empty_front_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report([_point(0, math.nan, status="failed")], [], tmp_path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ReportError):
            load_points(path)
        with pytest.raises(ReportError):
            load_points(tmp_path / "missing.csv")


class TestRunPoint:
    def test_failure_becomes_failed_point(self, teacher_data):
        network = NetworkConfig(layers=[PitConvSpec(c_in=3, c_out=1, rf_max=9)])
        point = run_point(network, teacher_data, _base())
        assert point.status == "failed"
        assert math.isnan(point.perf)
        assert "channels" in point.error


class TestRunSweep:
    @pytest.mark.asyncio
    async def test_single_point_equals_direct_run(self, tiny_config, teacher_data):
        base = _base(steps_wu=2)
        cfg = SweepConfig(lambda_grid=[0.01], warmup_grid=[2], base=base, network=tiny_config, max_workers=1)
        points = await run_sweep(cfg, teacher_data)

        seed = point_seed(base.rng_seed, 0, 0, 0)
        direct = run_pit(
            build_network(tiny_config, seed),
            teacher_data,
            base.model_copy(update={"lambda_": 0.01, "steps_wu": 2, "rng_seed": seed}),
        )
        assert len(points) == 1
        assert points[0].seed == seed
        assert points[0].perf == direct.final_val_loss
        assert points[0].params == direct.params
        assert points[0].dilations == direct.dilations
        assert points[0].history == direct.history

    @pytest.mark.asyncio
    async def test_grid_order_and_size_trend(self, tiny_config, teacher_data):
        base = TrainConfig(steps_ft=1, batch_size=4, learning_rate=0.05, patience_epochs=3, max_epochs=20)
        cfg = SweepConfig(
            lambda_grid=[0.0, 1e3],
            warmup_grid=[0, 2],
            repetitions=1,
            base=base,
            network=tiny_config,
            max_workers=2,
        )
        seen = []
        callbacks = TrainingCallback().on_any(lambda event: seen.append(event.type))
        points = await run_sweep(cfg, teacher_data, callbacks=callbacks)

        assert [(p.lambda_, p.steps_wu) for p in points] == [(0.0, 0), (0.0, 2), (1e3, 0), (1e3, 2)]
        assert all(p.ok for p in points)
        assert points[2].dilations == (8,)
        assert max(p.params for p in points[2:]) <= min(p.params for p in points[:2])
        assert seen[0] == EventType.SWEEP_START
        assert seen.count(EventType.SWEEP_POINT) == 4
        assert seen[-1] == EventType.SWEEP_COMPLETE

    @pytest.mark.asyncio
    async def test_all_failed(self, teacher_data):
        network = NetworkConfig(layers=[PitConvSpec(c_in=3, c_out=1, rf_max=9)])
        cfg = SweepConfig(lambda_grid=[0.0, 0.1], warmup_grid=[0], base=_base(), network=network)
        with pytest.raises(SweepError):
            await run_sweep(cfg, teacher_data)

    @pytest.mark.asyncio
    async def test_checkpoints_per_point(self, tiny_config, teacher_data, tmp_path):
        cfg = SweepConfig(
            lambda_grid=[0.0],
            warmup_grid=[0],
            repetitions=2,
            base=_base(checkpoint_dir=str(tmp_path)),
            network=tiny_config,
        )
        await run_sweep(cfg, teacher_data)
        assert (tmp_path / "point-0-0-0" / "latest" / "manifest.json").exists()
        assert (tmp_path / "point-0-0-1" / "latest" / "manifest.json").exists()
