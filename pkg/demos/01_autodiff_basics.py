"""A tour of the tape-based tensor core.

Builds a tiny computation by hand, runs one backward sweep, and checks
the result against central finite differences, which is the same
verification style the test suite uses.
"""

import numpy as np

from metroflow import Tape, backward, parameter
from metroflow.tensor import add_bias, matmul, mul, relu, sigmoid, sum_all

rng = np.random.default_rng(0)

# a one-hidden-layer network, written out as individual ops
w1 = parameter(rng.normal(0, 0.5, size=(3, 4)))
b1 = parameter(np.zeros((1, 4)))
w2 = parameter(rng.normal(0, 0.5, size=(4, 1)))
x = np.array([[0.2, -1.0, 0.7],
              [1.3, 0.4, -0.6]])


def loss_value():
    h = relu(add_bias(matmul(parameter(x), w1), b1))
    out = sigmoid(matmul(h, w2))
    return sum_all(mul(out, out))


with Tape() as tape:
    loss = loss_value()
backward(loss, tape)

print(f"loss = {loss.item():.6f}")
print("gradient shapes:", w1.grad.shape, b1.grad.shape, w2.grad.shape)

# central differences on a few coordinates of w1
eps = 1e-5
print("\ncoordinate  tape gradient   finite difference")
for idx in [(0, 0), (1, 2), (2, 3)]:
    keep = w1.values[idx]
    w1.values[idx] = keep + eps
    hi = loss_value().item()
    w1.values[idx] = keep - eps
    lo = loss_value().item()
    w1.values[idx] = keep
    fd = (hi - lo) / (2 * eps)
    print(f"w1{idx}     {w1.grad[idx]:+.8f}    {fd:+.8f}")

# tapes only record while active: no tape, no gradient bookkeeping
before = w1.grad.copy()
loss_value()
assert np.array_equal(w1.grad, before)
print("\nforward passes outside a tape leave gradients untouched")
