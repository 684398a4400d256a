"""Alpha, compositing and Laplacian-pyramid losses and their weighted sum."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

BINOMIAL_5 = np.outer([1, 4, 6, 4, 1], [1, 4, 6, 4, 1]) / 256.0


@dataclass
class LossWeights:
    alpha: float = 0.4
    comp: float = 1.2
    lap: float = 0.16

    def __post_init__(self):
        if min(self.alpha, self.comp, self.lap) < 0:
            raise ValueError("loss weights must be non-negative")


def _check_same(a: Tensor, b, what: str) -> None:
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def _as_mask(mask, shape, dtype) -> np.ndarray | None:
    if mask is None:
        return None
    m = np.asarray(mask.data if isinstance(mask, Tensor) else mask).astype(dtype)
    return np.broadcast_to(m, shape)


def alpha_loss(pred: Tensor, gt, unknown_mask=None) -> Tensor:
    """Mean |pred - gt| over the unknown region (or everywhere if the mask is empty/None)."""
    gt = T.as_tensor(gt, pred.dtype)
    _check_same(pred, gt, "alpha_loss")
    diff = T.tabs(pred - gt)
    m = _as_mask(unknown_mask, pred.shape, pred.dtype)
    if m is None or m.sum() == 0:
        return diff.mean()
    return (diff * m).sum() / float(m.sum())


def composition_loss(pred_alpha: Tensor, fg, bg, image, unknown_mask=None) -> Tensor:
    """Mean over unknown pixels of the channel-averaged |alpha F + (1 - alpha) B - I|.

    ``pred_alpha`` is [..., 1, H, W]; colour planes are [..., 3, H, W].
    """
    fg, bg, image = (T.as_tensor(v, pred_alpha.dtype) for v in (fg, bg, image))
    _check_same(fg, bg, "composition_loss fg/bg")
    _check_same(fg, image, "composition_loss fg/image")
    if pred_alpha.shape[-2:] != fg.shape[-2:] or pred_alpha.ndim != fg.ndim:
        raise ValueError(f"composition_loss: alpha {pred_alpha.shape} not broadcastable to {fg.shape}")
    comp = pred_alpha * fg + (1.0 - pred_alpha) * bg
    err = T.tabs(comp - image).mean(axis=-3, keepdims=True)
    m = _as_mask(unknown_mask, err.shape, err.dtype)
    if m is None or m.sum() == 0:
        return err.mean()
    return (err * m).sum() / float(m.sum())


def _blur(x: Tensor, kernel: np.ndarray) -> Tensor:
    """Depthwise 5x5 filter with replicate padding on [N,1,H,W]."""
    w = Tensor(kernel.reshape(1, 1, 5, 5).astype(x.dtype))
    return T.conv2d(T.pad_edge(x, 2), w)


def _as_planes(x: Tensor) -> Tensor:
    h, w = x.shape[-2:]
    return x.reshape(-1, 1, h, w)


def laplacian_pyramid(x: Tensor, levels: int = 5) -> list[Tensor]:
    """Band-pass levels followed by the final low-pass residual (``levels + 1`` maps)."""
    h, w = x.shape[-2:]
    if h % (2 ** levels) or w % (2 ** levels):
        raise ValueError(f"laplacian pyramid: {h}x{w} not divisible by 2^{levels}")
    cur = _as_planes(x)
    pyr = []
    for _ in range(levels):
        down = T.downsample_nearest(_blur(cur, BINOMIAL_5), 2)
        up = _blur(T.zero_insert(down, 2), 4 * BINOMIAL_5)
        pyr.append(cur - up)
        cur = down
    pyr.append(cur)
    return pyr


def reconstruct_pyramid(pyr: list[Tensor]) -> Tensor:
    cur = pyr[-1]
    for band in reversed(pyr[:-1]):
        cur = band + _blur(T.zero_insert(cur, 2), 4 * BINOMIAL_5)
    return cur


def laplacian_loss(pred: Tensor, gt, levels: int = 5) -> Tensor:
    """sum_i 2^(i-1) * mean|Lap_i(pred) - Lap_i(gt)| over the band-pass levels."""
    gt = T.as_tensor(gt, pred.dtype)
    _check_same(pred, gt, "laplacian_loss")
    pp = laplacian_pyramid(pred, levels)
    pg = laplacian_pyramid(gt, levels)
    total = None
    for i in range(levels):
        term = T.tabs(pp[i] - pg[i]).mean() * float(2 ** i)
        total = term if total is None else total + term
    return total


def combine(l_alpha, l_comp, l_lap, weights: LossWeights | None = None):
    """The weighted sum; works on Tensors or plain numbers."""
    w = weights or LossWeights()
    return w.alpha * l_alpha + w.comp * l_comp + w.lap * l_lap


def total_loss(pred_alpha: Tensor, gt_alpha, fg, bg, image, unknown_mask=None,
               weights: LossWeights | None = None, lap_levels: int = 5,
               unknown_only: bool = True) -> tuple[Tensor, dict[str, float]]:
    """Weighted alpha + compositing + Laplacian loss; also returns the components."""
    mask = unknown_mask if unknown_only else None
    la = alpha_loss(pred_alpha, gt_alpha, mask)
    lc = composition_loss(pred_alpha, fg, bg, image, mask)
    ll = laplacian_loss(pred_alpha, gt_alpha, lap_levels)
    total = combine(la, lc, ll, weights)
    parts = {"alpha": la.item(), "comp": lc.item(), "lap": ll.item(), "total": total.item()}
    return total, parts
