"""
Teacher recovery: can the search find the dilation of the network that
generated the data?

A 1-layer teacher with dilation 4 labels 2000 random sequences. A dense
student (dilation 1) is searched at five regularizer strengths and compared
against an oracle student that is handed the teacher's dilation.
"""
import logging
import os
import sys
import time

# Add parent directory to path to import framework
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pit_framework import (
    NetworkConfig,
    TrainConfig,
    build_network,
    generate_teacher_dataset,
    run_pit,
    teacher_config,
    train_fixed,
)
from pit_framework.core.layers import apply_dilations

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config")

LAMBDAS = [1e-4, 1e-3, 1e-2, 5e-2, 1e-1]
TOLERANCE = 1.1


def main():
    logging.basicConfig(level=logging.WARNING)
    started = time.perf_counter()

    print("=" * 60)
    print("🧑‍🏫 PIT Framework - Teacher Recovery")
    print("=" * 60)

    data = generate_teacher_dataset(teacher_config(9, 4, 1), n=2000, T=64, noise_sigma=0.01, seed=0)
    seed_cfg = NetworkConfig.load(os.path.join(CONFIG_DIR, "tiny_seed.json"))
    base = TrainConfig(
        steps_wu=200,
        batch_size=64,
        learning_rate=5e-3,
        patience_epochs=10,
        max_epochs=40,
        rng_seed=1,
    )

    # Oracle: the seed network with the teacher's dilation, trained without search
    oracle = train_fixed(apply_dilations(build_network(seed_cfg, rng_seed=1), (4,)), data, base)
    print(f"\n🔮 Oracle (d=4): val MSE {oracle.final_val_loss:.6f}, {oracle.params} params")
    print("-" * 40)

    recovered = []
    for lam in LAMBDAS:
        cfg = base.model_copy(update={"lambda_": lam})
        result = run_pit(build_network(seed_cfg, rng_seed=1), data, cfg)
        ratio = result.final_val_loss / oracle.final_val_loss
        ok = result.dilations[0] in (2, 4) and ratio <= TOLERANCE
        if ok:
            recovered.append(lam)
        mark = "✅" if ok else "➖"
        print(
            f"{mark} λ={lam:<7g} d={result.dilations[0]:<2} params={result.params:<3} "
            f"val MSE {result.final_val_loss:.6f} ({ratio:.2f}x oracle)"
        )

    elapsed = time.perf_counter() - started
    print("\n" + "=" * 60)
    if recovered:
        print(f"✨ Recovered the teacher's dilation at λ in {recovered} ({elapsed:.0f}s)")
    else:
        print(f"❌ No λ recovered the teacher's dilation ({elapsed:.0f}s)")
    print("=" * 60)
    return 0 if recovered else 1


if __name__ == "__main__":
    sys.exit(main())
