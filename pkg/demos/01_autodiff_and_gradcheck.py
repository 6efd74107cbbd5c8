"""Autodiff, gradient checking and Adam on a toy problem.

Run: python demos/01_autodiff_and_gradcheck.py
"""
# %%
import numpy as np

from notebert import tensor as T
from notebert.gradcheck import check_gradients
from notebert.optim import Adam

rng = np.random.default_rng(0)

# %% a tiny two-layer network built from the primitives
x = T.Tensor(rng.normal(size=(8, 4)))
y = (rng.random(8) > 0.5).astype(float)
w1 = T.parameter(rng.normal(0, 0.5, size=(4, 6)))
b1 = T.parameter(np.zeros(6))
w2 = T.parameter(rng.normal(0, 0.5, size=(6, 1)))


def loss():
    h = T.gelu(x @ w1 + b1)
    return T.bce_with_logits((h @ w2).reshape(8), y)


print("initial loss", round(loss().item(), 4))

# %% analytic vs numeric gradients
err = check_gradients(loss, [w1, b1, w2])
print(f"worst relative error, 3-point stencil: {err:.2e}")
print(f"worst relative error, 5-point stencil: {check_gradients(loss, [w1, b1, w2], order=4):.2e}")

# %% a few hundred Adam steps
opt = Adam([w1, b1, w2], lr=0.05)
for step in range(300):
    opt.zero_grad()
    value = loss()
    value.backward()
    opt.step()
    if step % 100 == 0:
        print("step", step, "loss", round(value.item(), 4))
print("final loss", round(loss().item(), 4))
