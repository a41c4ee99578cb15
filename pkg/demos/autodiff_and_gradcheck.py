"""
Reverse-mode gradients and finite-difference checks
===================================================

Build a tiny computation from the tensor engine, run the reverse pass,
then confirm the gradients against central differences.
"""

import numpy as np

from est import functional as F
from est import tensor as T
from est.gradcheck import gradcheck
from est.tensor import Tensor, backward

rng = np.random.default_rng(0)

# two parameters and a fixed input
w = Tensor(rng.normal(size=(4, 3)), requires_grad=True, name="w")
b = Tensor(np.zeros(3), requires_grad=True, name="b")
x = Tensor(rng.normal(size=(5, 4)))
labels = [0, 2, 1, 1, 0]


def loss_fn():
    probs = T.softmax(F.linear(x, w, b), axis=-1)
    return F.bce_sum_loss(probs, F.one_hot(labels, 3))


loss = loss_fn()
print("loss:", loss.item())

# backward returns the leaf gradients by name and also stores them on .grad
grads = backward(loss)
print("d loss / d b:", grads["b"])

# the graph is spent now; a second backward over it is refused
try:
    backward(loss)
except Exception as exc:
    print("second backward:", type(exc).__name__)

# central differences for every element of w and b
report = gradcheck(loss_fn, {"w": w, "b": b}, h=1e-5, tol=1e-6)
print("max relative error:", report.max_rel_error, "passed:", report.passed)

# attention weights are a softmax, so every row sums to one
q = Tensor(rng.normal(size=(2, 4)))
kv = Tensor(rng.normal(size=(3, 4)))
out, weights = F.scaled_dot_attention(q, kv, kv)
print("attention row sums:", weights.data.sum(axis=-1))
