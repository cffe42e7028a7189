"""A tour of the autodiff engine: build a scalar loss, pull gradients back
through it, and confirm them against finite differences.

Run: python3 demos/01_autodiff_basics.py
"""

import numpy as np

from automixer import autodiff as ad
from automixer.autodiff import Tensor, backward
from automixer.gradcheck import check_gradients

rng = np.random.default_rng(0)

# --- a tiny two-layer network, by hand ------------------------------------
w1 = Tensor(rng.normal(0, 0.3, (4, 8)), requires_grad=True, name="w1")
b1 = Tensor(np.zeros(8), requires_grad=True, name="b1")
w2 = Tensor(rng.normal(0, 0.3, (8, 1)), requires_grad=True, name="w2")

x = Tensor(rng.normal(size=(16, 4)))
target = Tensor(rng.normal(size=(16, 1)))

hidden = ad.gelu(ad.add(ad.matmul(x, w1), b1))
loss = ad.loss_mse(ad.matmul(hidden, w2), target)
backward(loss)

print(f"loss = {loss.item():.4f}")
print(f"|dL/dw1| = {np.abs(w1.grad).mean():.5f}  "
      f"|dL/dw2| = {np.abs(w2.grad).mean():.5f}")

# --- check the tape against central finite differences --------------------
worst = check_gradients(
    lambda: ad.loss_mse(
        ad.matmul(ad.gelu(ad.add(ad.matmul(x, w1), b1)), w2), target),
    [w1, b1, w2], tol=1e-5)
print(f"finite-difference check passed, worst relative error {worst:.2e}")

# --- a few optimizer steps ------------------------------------------------
opt = ad.Adam([w1, b1, w2], lr=1e-2)
for step in range(200):
    opt.zero_grad()
    loss = ad.loss_mse(
        ad.matmul(ad.gelu(ad.add(ad.matmul(x, w1), b1)), w2), target)
    backward(loss)
    opt.step()
print(f"after 200 Adam steps: loss = {loss.item():.4f}")
