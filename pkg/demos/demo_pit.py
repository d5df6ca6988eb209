"""
Walkthrough of a single dilation search on a small synthetic task
"""
import logging
import os
import sys
import tempfile

# Add parent directory to path to import framework
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pit_framework import (
    EventType,
    NetworkConfig,
    TrainConfig,
    TrainingCallback,
    build_network,
    count_params,
    export_extracted,
    generate_teacher_dataset,
    run_pit,
    teacher_config,
)
from pit_framework.core.trainer import evaluate
from pit_framework.data.dataset import Split
from pit_framework.extensions.storage import load_bundle, save_bundle

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config")


def main():
    logging.basicConfig(level=logging.WARNING)

    print("=" * 60)
    print("✂️  PIT Framework - Single Search Demo")
    print("=" * 60)

    # 1. Data: a teacher TCN with a known dilation of 4
    data = generate_teacher_dataset(teacher_config(9, 4, 1), n=400, T=48, noise_sigma=0.01, seed=0)
    print(f"\n📦 Dataset: {len(data)} sequences, teacher dilations {data.manifest['dilations']}")

    # 2. Seed network: dense rf-9 kernel
    seed_cfg = NetworkConfig.load(os.path.join(CONFIG_DIR, "tiny_seed.json"))
    net = build_network(seed_cfg, rng_seed=0)
    print(f"🌱 Seed network: {count_params(seed_cfg)} parameters, dilations {net.dilations()}")

    # 3. Progress reporting through callbacks
    callbacks = TrainingCallback()
    callbacks.on(EventType.PHASE_START, lambda e: print(f"\n▶️  Phase {e.content} (step {e.metadata['step']})"))
    callbacks.on_epoch(
        lambda e: print(f"   📉 {e.metadata['phase']} epoch {e.metadata['epoch']}: val={e.content:.5f}")
        if e.metadata["epoch"] % 5 == 0 else None
    )
    callbacks.on(
        EventType.GAMMA_UPDATE,
        lambda e: print(f"   🔀 dilations now {tuple(e.content)}"),
    )

    # 4. Search
    with tempfile.TemporaryDirectory() as workdir:
        cfg = TrainConfig(
            steps_wu=50,
            lambda_=0.05,
            batch_size=32,
            learning_rate=5e-3,
            patience_epochs=5,
            max_epochs=60,
            checkpoint_dir=os.path.join(workdir, "checkpoints"),
        )
        result = run_pit(net, data, cfg, callbacks=callbacks)

        print("\n" + "-" * 40)
        print(f"✅ Found dilations {result.dilations}")
        print(f"📏 Parameters: {count_params(seed_cfg)} -> {result.params}")
        print(f"🎯 Validation loss: {result.final_val_loss:.5f}")
        test_x, test_y = data.subset(Split.TEST)
        print(f"🧪 Test loss: {evaluate(result.net, test_x, test_y, 'mse'):.5f}")

        # 5. Deployable network with only the surviving taps
        bundle = save_bundle(export_extracted(result.net), os.path.join(workdir, "bundle"))
        model = load_bundle(bundle)
        print(f"💾 Exported bundle with dilations {model.dilations}")
        print(f"💾 Checkpoint: {result.checkpoint_path}")

    print("\n" + "=" * 60)
    print("✨ Done!")
    print("=" * 60)


if __name__ == "__main__":
    main()
