"""A tour of the reverse-mode tensor engine.

Shows the Tensor wrapper on a few toy computations: building a graph,
calling backward, checking one analytic gradient against a finite-difference
slope, and running a convolution both forward and backward.
"""

import numpy as np

from bjdd import tensor as T
from bjdd.tensor import Tensor


def main():
    # scalar chain: y = mean((2x - 0)^2) so dy/dx = 8x / n
    x = Tensor(np.array([1.0, -2.0, 3.0], dtype=np.float32), requires_grad=True)
    zero = Tensor(np.zeros(3, dtype=np.float32))
    y = T.mean_square(T.mul(x, 2.0), zero)
    y.backward()
    print(f"y = {y.item():.4f}")
    print(f"dy/dx      = {x.grad.round(4).tolist()}")
    print(f"expected   = {(8.0 * x.data / x.data.size).round(4).tolist()}")

    # finite-difference cross-check on a single coordinate of a sigmoid mean
    a = np.linspace(-1.0, 1.0, 5).astype(np.float64)
    t = Tensor(a.copy(), requires_grad=True, dtype=np.float64)
    T.mean(T.sigmoid(t)).backward()
    h = 1e-6
    ap, am = a.copy(), a.copy()
    ap[2] += h
    am[2] -= h
    fd = (T.mean(T.sigmoid(Tensor(ap, dtype=np.float64))).item()
          - T.mean(T.sigmoid(Tensor(am, dtype=np.float64))).item()) / (2 * h)
    print(f"sigmoid-mean grad at coord 2: analytic {t.grad[2]:.8f} vs fd {fd:.8f}")

    # convolution: gradients reach input, weight and bias in one backward pass
    rng = np.random.default_rng(0)
    img = Tensor(rng.random((1, 3, 8, 8)).astype(np.float32), requires_grad=True)
    w = Tensor(rng.normal(0, 0.1, (4, 3, 3, 3)).astype(np.float32), requires_grad=True)
    b = Tensor(np.zeros(4, dtype=np.float32), requires_grad=True)
    out = T.conv2d(img, w, b, stride=1, padding=1)
    print(f"conv2d: {img.shape} -> {out.shape}")
    T.mean_square(out, Tensor(np.zeros(out.shape, dtype=np.float32))).backward()
    for name, t2 in (("input", img), ("weight", w), ("bias", b)):
        print(f"  grad {name:<6} shape {t2.grad.shape}, norm {np.linalg.norm(t2.grad):.4f}")

    # a consumed graph refuses a second backward instead of giving wrong sums
    z = T.mean(T.relu(Tensor(np.ones(4, dtype=np.float32), requires_grad=True)))
    z.backward()
    try:
        z.backward()
    except T.GraphConsumedError as e:
        print(f"second backward raises: {e}")

    # pixel shuffle moves channel groups into space, losslessly
    p = Tensor(rng.random((1, 8, 2, 2)).astype(np.float32))
    up = T.pixel_shuffle(p, 2)
    back = T.pixel_unshuffle(up, 2)
    print(f"pixel_shuffle {p.shape} -> {up.shape}, round trip exact: "
          f"{np.array_equal(back.data, p.data)}")


if __name__ == "__main__":
    main()
