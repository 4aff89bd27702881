"""Tour of the tape-based autodiff core.

Builds a few expressions under a Tape, walks them backward, and checks
one gradient against central finite differences by hand.
"""

import numpy as np

from lfenet import tensor as T


def main():
    rng = np.random.Generator(np.random.PCG64(0))

    # gradients only exist under an active tape
    x = T.tensor(rng.uniform(-1, 1, (2, 3)), requires_grad=True, dtype=np.float64)
    y = T.mul(x, 2.0)
    print(f"outside a tape, outputs do not track gradients: requires_grad={y.requires_grad}")

    with T.Tape() as tape:
        y = T.mul(x, x)
        loss = T.tensor_sum(y)
        print(f"taped ops recorded: {len(tape)}")
        T.backward(loss)
    print(f"d(sum(x*x))/dx == 2x everywhere: {np.allclose(x.grad, 2 * x.data)}")

    # reusing a value sums the gradient over both uses
    x.zero_grad()
    with T.Tape():
        y = T.mul(x, 3.0)
        loss = T.tensor_sum(T.add(T.mul(y, y), y))
        T.backward(loss)
    print(f"diamond reuse: matches 18x + 3: {np.allclose(x.grad, 18 * x.data + 3)}")

    # a convolution gradient against finite differences
    w = T.tensor(rng.standard_normal((2, 1, 3, 3)) * 0.5, requires_grad=True,
                 dtype=np.float64)
    img = T.tensor(rng.uniform(0, 1, (1, 1, 6, 6)), dtype=np.float64)

    def build():
        return T.abs_sum(T.conv2d(img, w, padding=1))

    worst = T.check_gradient(build, [w], eps=1e-6, rtol=1e-6, atol=1e-9)
    print(f"conv2d weight gradient vs finite differences, worst violation: {worst:.3g}")
    print("(negative means every sampled coordinate sits inside tolerance)")


if __name__ == "__main__":
    main()
