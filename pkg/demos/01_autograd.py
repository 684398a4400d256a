"""
Reverse-mode autodiff on numpy arrays
=====================================

Build a small graph, run backward, compare with finite differences.
"""
import numpy as np

from trimatte import tensor as T
from trimatte.gradcheck import gradcheck, numerical_grad
from trimatte.tensor import Tensor

rng = np.random.default_rng(0)

# leaves that want gradients
x = Tensor(rng.standard_normal((1, 2, 6, 6)), requires_grad=True)
w = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)

y = T.relu(T.conv2d(x, w, padding=1))
loss = (y * y).mean()
loss.backward()
print("loss", loss.item())
print("dL/dw shape", w.grad.shape)

# the same gradient by central differences
fd = numerical_grad(lambda: (T.relu(T.conv2d(x, w, padding=1)) ** 2).mean(), w)
print("max |autograd - fd|", np.abs(w.grad - fd).max())

# gradcheck wraps that comparison and returns the worst relative error
print("conv2d -> mean rel err", gradcheck(lambda: T.conv2d(x, w, padding=1).mean(), [x, w]))

# a tensor used twice sums both path gradients
a = Tensor([0.5, -1.0, 2.0], requires_grad=True)
(T.exp(a) * a + a * 3.0).sum().backward()
print("reuse grad", a.grad, "expected", np.exp(a.data) * (1 + a.data) + 3)

# nothing is taped inside no_grad
with T.no_grad():
    z = x * 2.0
print("taped under no_grad:", z.requires_grad)
