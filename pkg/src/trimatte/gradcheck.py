"""Central finite-difference gradient checks."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """d fn() / d t.data by central differences, one coordinate at a time."""
    grad = np.zeros_like(t.data, dtype=np.float64)
    flat = t.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(fn().data.sum())
        flat[i] = orig - h
        fm = float(fn().data.sum())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> float:
    """Worst relative error between autograd and finite differences over ``inputs``.

    ``fn`` must rebuild the graph from the current values of ``inputs`` on every
    call and return a scalar (non-scalar outputs are summed). Errors are scaled by
    the largest gradient entry across all inputs, so an input whose true gradient
    is identically zero is judged against the others rather than its own round-off.
    """
    for t in inputs:
        t.grad = None
    out = fn()
    loss = out if out.size == 1 else out.sum()
    loss.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]
    numeric = [numerical_grad(fn, t, h) for t in inputs]
    diff = max((np.abs(a - n).max(initial=0.0) for a, n in zip(analytic, numeric)), default=0.0)
    scale = max([np.abs(g).max(initial=0.0) for g in analytic + numeric] + [1e-12])
    return float(diff / scale)
