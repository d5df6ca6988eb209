"""
Size/accuracy exploration on the multi-scale task: one sweep over the
regularizer strength, the resulting Pareto front and a report on disk.
"""
import asyncio
import logging
import os
import sys
import time

# Add parent directory to path to import framework
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pit_framework import (
    EventType,
    NetworkConfig,
    SweepConfig,
    TrainConfig,
    TrainingCallback,
    emit_report,
    generate_multiscale_dataset,
    pareto_front,
    run_sweep,
)
from pit_framework.core.layers import count_params
from pit_framework.extensions.explorer import select_representatives

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


async def main():
    logging.basicConfig(level=logging.WARNING)
    started = time.perf_counter()

    print("=" * 60)
    print("📈 PIT Framework - Pareto Exploration")
    print("=" * 60)

    network = NetworkConfig.load(os.path.join(ROOT, "config", "multiscale_seed.json"))
    data = generate_multiscale_dataset([4, 32], n=600, T=96, seed=0)
    print(f"\n🌱 Seed network: {count_params(network)} parameters, 3 searchable layers")

    cfg = SweepConfig(
        lambda_grid=[0.0, 1e-6, 1e-5, 1e-4, 1e-3],
        warmup_grid=[100],
        base=TrainConfig(batch_size=32, learning_rate=3e-3, patience_epochs=5, max_epochs=40, rng_seed=0),
        network=network,
        max_workers=os.cpu_count() or 2,
    )

    callbacks = TrainingCallback()
    callbacks.on(
        EventType.SWEEP_POINT,
        lambda e: print(
            f"   📍 {e.metadata['done']}/{e.metadata['total']} λ={e.content['lambda']:g} "
            f"params={e.content['params']} status={e.content['status']}"
        ),
    )
    points = await run_sweep(cfg, data, callbacks=callbacks)

    front = pareto_front(points)
    print("\n" + "-" * 40)
    print(f"🏁 {len(front)} of {len(points)} points on the front:")
    for point in front:
        print(f"   • {point.params:>5} params  loss {point.perf:.4f}  dilations {point.dilations}  λ={point.lambda_:g}")

    picks = select_representatives(front, count_params(network))
    for name, point in picks.items():
        print(f"⭐ {name}: {point.params} params, loss {point.perf:.4f}")

    table, summary = emit_report(points, front, os.path.join(ROOT, "runs", "pareto"), network=network)
    print(f"\n💾 Report written to {table} and {summary}")

    smallest_lambda, largest_lambda = points[0], points[-1]
    print(
        f"📏 Size at λ=0: {smallest_lambda.params}, at λ={largest_lambda.lambda_:g}: {largest_lambda.params}"
    )

    checks = {
        "at least 3 points on the front": len(front) >= 3,
        "largest λ is no bigger than λ=0": largest_lambda.params <= smallest_lambda.params,
    }
    print("\n" + "=" * 60)
    for name, ok in checks.items():
        print(f"{'✅' if ok else '❌'} {name}")
    print(f"✨ Finished in {time.perf_counter() - started:.0f}s")
    print("=" * 60)
    return 0 if all(checks.values()) else 1


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
