"""Tour of the autodiff core: tensors, backward passes, gradient checking.

Run:  python demos/01_autodiff_and_gradients.py
"""

import numpy as np

from pillartrack.autodiff import (Parameter, Tensor, adam_step, grad_check,
                                  linear, relu)

rng = np.random.default_rng(0)

# A tiny two-layer computation. Parameters are named leaf tensors.
x = Tensor(rng.normal(size=(4, 3)))
w1 = Parameter("w1", rng.normal(size=(3, 8)))
b1 = Parameter("b1", np.zeros(8))
w2 = Parameter("w2", rng.normal(size=(8, 2)))
b2 = Parameter("b2", np.zeros(2))

loss = linear(relu(linear(x, w1, b1)), w2, b2).sum()
loss.backward()
print(f"loss               {float(loss.data):+.6f}")
print(f"|dL/dw1|           {np.abs(w1.grad).sum():.6f}")
print(f"|dL/db2|           {np.abs(b2.grad).sum():.6f}")

# Every backward implementation is checked against central differences.
for p in (w1, b1, w2, b2):
    p.grad = None
err = grad_check(lambda: linear(relu(linear(x, w1, b1)), w2, b2).sum(),
                 [w1, b1, w2, b2], probes_per_param=10)
print(f"finite-difference  worst relative error {err:.2e}")

# Adam drives a scalar quadratic to its minimum.
p = Parameter("p", np.array(0.0))
for step in range(200):
    ((p - 3.0) ** 2).sum().backward()
    adam_step([p], lr=0.1)
print(f"adam               p -> {float(p.data):.4f} (target 3.0)")
