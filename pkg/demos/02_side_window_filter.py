"""Side-window filtering versus a plain box filter.

The box filter centers its window on every pixel, so pixels near an edge
average across it and the edge smears. The side-window filter offers each
pixel eight windows whose boundary (not center) touches it, then keeps
the window whose mean is closest to the pixel. Edges and corners become
fixed points while noise still averages away.
"""

import numpy as np

from lfenet.filters import SideWindowSpec, box_filter, side_window_box_filter


def mse(a, b):
    return float(((a - b) ** 2).mean())


def main():
    rng = np.random.Generator(np.random.PCG64(7))

    clean = np.zeros((32, 32))
    clean[:, 16:] = 1.0
    noisy = clean + rng.normal(0.0, 0.05, clean.shape)

    print("vertical step edge, sigma=0.05 noise, radius 2, one pass:")
    side = side_window_box_filter(noisy, SideWindowSpec(radius=2, iterations=1))
    box = box_filter(noisy, 2)
    print(f"  MSE to clean edge  side-window {mse(side, clean):.5f}   box {mse(box, clean):.5f}")

    print("noiseless edge is an exact fixed point, the box filter blurs it:")
    side = side_window_box_filter(clean, SideWindowSpec(radius=3, iterations=10))
    box = box_filter(clean, 3)
    print(f"  side-window max |change| {np.abs(side - clean).max():.3f}"
          f"   box max |change| {np.abs(box - clean).max():.3f}")

    corner = np.zeros((16, 16))
    corner[:8, :8] = 1.0
    side = side_window_box_filter(corner, SideWindowSpec(radius=3, iterations=5))
    print(f"right-angle corner preserved exactly after 5 passes: "
          f"{np.array_equal(side, corner)}")

    spike = np.zeros((16, 16))
    spike[8, 8] = 1.0
    side = side_window_box_filter(spike, SideWindowSpec(radius=5, iterations=1))
    print(f"isolated spike attenuated to {side[8, 8]:.4f} "
          f"(best window still contains it), neighbors untouched: "
          f"{np.count_nonzero(side) == 1}")


if __name__ == "__main__":
    main()
