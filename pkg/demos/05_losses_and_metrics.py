"""Quality metrics and loss terms on controlled perturbations.

Degrades a clean image in three ways with matched pixel budgets and
shows how PSNR, SSIM, the frequency and spatial loss terms, and the
binary error map each respond.
"""

import numpy as np

from lfenet import degrade as D
from lfenet import objectives as O


def main():
    rng = np.random.Generator(np.random.PCG64(8))
    clean, _ = D.synthesize_stereo_pair(rng, 64, 64)
    clean = clean.astype(np.float64)

    noisy = np.clip(clean + rng.normal(0.0, 0.05, clean.shape), 0.0, 1.0)
    shifted = np.clip(clean + 0.05, 0.0, 1.0)
    blurred = clean.copy()
    for _ in range(4):
        blurred = (np.roll(blurred, 1, axis=2) + blurred
                   + np.roll(blurred, -1, axis=2)) / 3.0

    print("same clean target, three perturbations:")
    print(f"  {'perturbation':<12} {'psnr':>7} {'ssim':>7}")
    for name, img in (("identical", clean), ("noise 0.05", noisy),
                      ("bias +0.05", shifted), ("blurred", blurred)):
        p = O.psnr(img, clean)
        s = float(O.ssim(img, clean).data)
        label = "inf" if p == float("inf") else f"{p:7.2f}"
        print(f"  {name:<12} {label:>7} {s:7.4f}")
    print("  (SSIM forgives the uniform bias; PSNR punishes it like noise)")

    total, b = O.evaluate_pair(noisy, blurred, clean, clean)
    print("\nevaluate_pair on (noisy left, blurred right):")
    print(f"  l_fre {b.l_fre:.4f}  l_spa {b.l_spa:.4f}  total {b.total:.4f}")
    print(f"  left  psnr {b.psnr_left:.2f}  ssim {b.ssim_left:.4f}")
    print(f"  right psnr {b.psnr_right:.2f}  ssim {b.ssim_right:.4f}")
    print(f"  total tracks the breakdown: {abs(total.item() - b.total) == 0.0}")

    patchy = clean.copy()
    patchy[:, 20:36, 24:44] = np.clip(patchy[:, 20:36, 24:44] + 0.3, 0.0, 1.0)
    emap = O.mse_map(patchy, clean)
    inside = emap[20:36, 24:44].mean()
    outside = (emap.sum() - emap[20:36, 24:44].sum()) / (emap.size - 16 * 20)
    print("\nbinary error map on a localized corruption:")
    print(f"  white fraction inside the patch {inside:.3f}, outside {outside:.3f}")


if __name__ == "__main__":
    main()
