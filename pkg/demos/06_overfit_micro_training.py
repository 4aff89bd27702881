"""A one-minute end-to-end training run on synthetic data.

Builds a three-pair dataset in a temp directory, trains a width-4 model
for 60 steps, and reads back the loss log and before/after metrics.
The run is tiny; the point is watching every stage connect, not image
quality.
"""

import os
import tempfile

import numpy as np

from lfenet import degrade as D
from lfenet import network as N
from lfenet import training as TR
from lfenet.objectives import psnr


def main():
    rng = np.random.Generator(np.random.PCG64(14))
    with tempfile.TemporaryDirectory() as tmp:
        gt = os.path.join(tmp, "gt")
        os.makedirs(os.path.join(gt, "left"))
        os.makedirs(os.path.join(gt, "right"))
        for i in range(3):
            l, r = D.synthesize_stereo_pair(rng, 32, 32)
            D.save_png(os.path.join(gt, "left", f"scene{i}.png"), l)
            D.save_png(os.path.join(gt, "right", f"scene{i}.png"), r)
        data = os.path.join(tmp, "data")
        D.build_dataset(gt, data, seed=5, split_spec=(0.8, 0.0, 0.2))

        cfg = TR.TrainConfig(lr0=1e-3, epochs=60, batch=2, patch=32, seed=9,
                             checkpoint_every=0, val_crop=32,
                             network=N.NetworkConfig(base_channels=4))
        out = os.path.join(tmp, "run")
        result = TR.train(cfg, data, out)
        print(f"trained {result.steps} steps "
              f"({result.epochs} epochs over 2 training pairs)")

        with open(result.log_path, encoding="utf-8") as fh:
            rows = [line.split("\t") for line in fh if not line.startswith("#")]
        first, last = float(rows[0][4]), float(rows[-1][4])
        print(f"training loss: {first:.3f} at step 1 -> {last:.3f} at step {len(rows)}")

        train_samples = [D.load_sample(data, rec) for rec in D.read_manifest(data)
                         if rec["split"] == "train"]
        base = np.mean([psnr(s.low_left, s.gt_left) for s in train_samples])
        stats = TR.evaluate_model(result.store, cfg.network, train_samples)
        print(f"training pairs, left view: degraded input {base:.2f} dB -> "
              f"enhanced {stats['psnr_left']:.2f} dB, ssim {stats['ssim_left']:.3f}")
        print(f"checkpoint written: {os.path.basename(result.checkpoint_path)}")


if __name__ == "__main__":
    main()
