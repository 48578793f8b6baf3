"""Tour of the reverse-mode autodiff core.

Builds a tiny two-layer network by hand, backpropagates a scalar loss, and
checks one gradient against a finite difference to show the graph is exact.
"""

import numpy as np

from tacit import autodiff as ad
from tacit.autodiff import DiffValue, ParamSet, backward, sgd_step


def main():
    rng = np.random.default_rng(0)
    params = ParamSet()
    w1 = params.add("w1", rng.standard_normal((3, 8)) * 0.5)
    b1 = params.add("b1", np.zeros(8))
    w2 = params.add("w2", rng.standard_normal((8, 1)) * 0.5)
    b2 = params.add("b2", np.zeros(1))

    x = DiffValue(rng.standard_normal((16, 3)))
    target = DiffValue(rng.standard_normal((16, 1)))

    def loss_value():
        h = ad.tanh(ad.affine(x, w1, b1))
        return ad.mse(ad.affine(h, w2, b2), target)

    loss = loss_value()
    print(f"initial loss: {float(loss.data):.4f}")
    backward(loss)

    # cross-check a single parameter entry against a central finite difference
    step = 1e-5
    orig = w1.data[0, 0]
    w1.data[0, 0] = orig + step
    up = float(loss_value().data)
    w1.data[0, 0] = orig - step
    down = float(loss_value().data)
    w1.data[0, 0] = orig
    numeric = (up - down) / (2 * step)
    print(f"analytic grad w1[0,0]: {w1.grad[0, 0]: .8f}")
    print(f"numeric  grad w1[0,0]: {numeric: .8f}")

    # a few plain SGD steps with global-norm clipping
    for k in range(200):
        loss = loss_value()
        backward(loss)
        sgd_step(params, lr=0.05, clip=10.0)
    print(f"loss after 200 SGD steps: {float(loss_value().data):.4f}")


if __name__ == "__main__":
    main()
