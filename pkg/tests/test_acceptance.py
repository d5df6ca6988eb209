"""
End-to-end experiments: recovering a known dilation and the size/accuracy
trade-off of a sweep. Deselected by default; run with ``pytest -m slow``.
"""
import math

import pytest

from pit_framework.core.config import NetworkConfig, TrainConfig
from pit_framework.core.layers import apply_dilations, build_network
from pit_framework.core.trainer import run_pit, train_fixed
from pit_framework.data.synthetic import generate_multiscale_dataset, generate_teacher_dataset, teacher_config
from pit_framework.extensions.explorer import SweepConfig, dominates, pareto_front, run_sweep

pytestmark = pytest.mark.slow


def test_teacher_dilation_is_recovered(config_dir):
    data = generate_teacher_dataset(teacher_config(9, 4, 1), n=2000, T=64, noise_sigma=0.01, seed=0)
    seed_cfg = NetworkConfig.load(config_dir / "tiny_seed.json")
    base = TrainConfig(steps_wu=200, batch_size=64, learning_rate=5e-3, patience_epochs=10, max_epochs=40, rng_seed=1)

    oracle = train_fixed(apply_dilations(build_network(seed_cfg, rng_seed=1), (4,)), data, base)
    outcomes = []
    for lam in [1e-4, 1e-3, 1e-2, 5e-2, 1e-1]:
        result = run_pit(build_network(seed_cfg, rng_seed=1), data, base.model_copy(update={"lambda_": lam}))
        outcomes.append((lam, result.dilations, result.final_val_loss))

    assert any(
        dilations[0] in (2, 4) and loss <= 1.1 * oracle.final_val_loss for _, dilations, loss in outcomes
    ), f"oracle={oracle.final_val_loss:.6g} outcomes={outcomes}"


@pytest.mark.asyncio
async def test_sweep_spreads_over_sizes(config_dir):
    network = NetworkConfig.load(config_dir / "multiscale_seed.json")
    data = generate_multiscale_dataset([4, 32], n=600, T=96, seed=0)
    cfg = SweepConfig(
        lambda_grid=[0.0, 1e-6, 1e-5, 1e-4, 1e-3],
        warmup_grid=[100],
        base=TrainConfig(batch_size=32, learning_rate=3e-3, patience_epochs=5, max_epochs=40, rng_seed=0),
        network=network,
        max_workers=4,
    )
    points = await run_sweep(cfg, data)
    front = pareto_front(points)

    assert all(point.ok for point in points)
    assert points[0].dilations == (1, 1, 1)
    assert points[-1].params <= points[0].params
    assert len(front) >= 3
    for point in front:
        assert math.isfinite(point.perf)
        assert not any(dominates(other, point) for other in points if other.ok)
