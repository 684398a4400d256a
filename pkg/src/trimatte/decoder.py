"""U-shaped decoder with multi-scale global-guided fusion (MGF)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .nn import Conv2d, Linear, Module
from .tensor import Tensor
from .trimap import downsample_trimap, non_background_mask


@dataclass
class DecoderConfig:
    # pyramid levels (0 = shallowest) whose skip fusion uses MGF; only interior levels qualify
    mgf_levels: list[int] = field(default_factory=lambda: [1, 2, 3])
    squeeze_ratio: int = 4

    def validate(self, n_levels: int = 5) -> None:
        bad = set(self.mgf_levels) - set(range(1, n_levels - 1))
        if bad:
            raise ConfigError(f"mgf_levels {sorted(bad)} must be interior levels 1..{n_levels - 2}")
        if self.squeeze_ratio < 1:
            raise ConfigError("squeeze_ratio must be >= 1")


class MGF(Module):
    """Fuse (shallower, current, deeper) features into one map shaped like the current one.

    The shallower map is masked to non-background pixels and downsampled, then
    concatenated with the current map and convolved to T_f. The deeper map is
    pooled to a channel vector and squeezed by a shared FC layer into two heads:
    gamma re-weights T_f through a sigmoid and beta shifts it. A last conv plus
    a skip connection from the current map gives the output.
    """

    def __init__(self, c_prev: int, c_cur: int, c_next: int, rng: np.random.Generator, squeeze_ratio: int = 4):
        hidden = max(1, c_next // squeeze_ratio)
        self.align = Conv2d(c_prev + c_cur, c_cur, 3, rng)
        self.squeeze = Linear(c_next, hidden, rng)
        self.gamma = Linear(hidden, c_cur, rng)
        self.beta = Linear(hidden, c_cur, rng)
        self.fuse = Conv2d(c_cur, c_cur, 3, rng)

    def __call__(self, t_prev: Tensor, t_cur: Tensor, t_next: Tensor, nb_mask: Tensor) -> Tensor:
        check_mgf_inputs(t_prev, t_cur, t_next, nb_mask)
        low = T.downsample_nearest(t_prev * nb_mask, 2)
        t_f = self.align(T.concat([low, t_cur], axis=1))
        s = T.relu(self.squeeze(T.global_avg_pool(t_next)))
        n, c = s.shape[0], t_f.shape[1]
        gamma = T.sigmoid(self.gamma(s)).reshape(n, c, 1, 1)
        beta = self.beta(s).reshape(n, c, 1, 1)
        return self.fuse(gamma * t_f + beta) + t_cur


def check_mgf_inputs(t_prev: Tensor, t_cur: Tensor, t_next: Tensor, nb_mask: Tensor) -> None:
    hp, wp = t_prev.shape[-2:]
    hc, wc = t_cur.shape[-2:]
    hn, wn = t_next.shape[-2:]
    if (hp, wp) != (2 * hc, 2 * wc) or (hc, wc) != (2 * hn, 2 * wn):
        raise ValueError(f"MGF needs spatial ratio 2:1:1/2, got {(hp, wp)}, {(hc, wc)}, {(hn, wn)}")
    if nb_mask.shape[-2:] != (hp, wp):
        raise ValueError(f"non-background mask {nb_mask.shape[-2:]} must match T_prev {(hp, wp)}")
    vals = np.unique(nb_mask.data)
    if not np.all(np.isin(vals, (0.0, 1.0))):
        raise ValueError("non-background mask must be binary")


def mgf_fuse(module: MGF, t_prev: Tensor, t_cur: Tensor, t_next: Tensor, nb_mask: Tensor) -> Tensor:
    return module(t_prev, t_cur, t_next, nb_mask)


class Decoder(Module):
    """Deep-to-shallow decoding of a feature pyramid into a [N,1,H,W] alpha matte.

    Level n's decoded map D_n is a conv over (upsampled D_{n+1}, pyramid[n]);
    at MGF levels it is then fused with pyramid[n-1] (shallower, masked) and
    D_{n+1} (global guidance). The last map is upsampled to input size and
    passed through a conv + sigmoid.
    """

    def __init__(self, channels: list[int], strides: list[int], config: DecoderConfig, rng: np.random.Generator):
        config.validate(len(channels))
        self.config = config
        self.strides = list(strides)
        self.out_stride = strides[0]
        n = len(channels)
        self.merge = {}
        self.mgf = {}
        for lvl in range(n - 2, -1, -1):
            self.merge[str(lvl)] = Conv2d(channels[lvl + 1] + channels[lvl], channels[lvl], 3, rng)
            if lvl in config.mgf_levels:
                self.mgf[str(lvl)] = MGF(channels[lvl - 1], channels[lvl], channels[lvl + 1], rng,
                                         config.squeeze_ratio)
        self.head = Conv2d(channels[0], channels[0], 3, rng)
        self.out = Conv2d(channels[0], 1, 3, rng)

    def __call__(self, pyramid: list[Tensor], classes: np.ndarray) -> Tensor:
        h0, w0 = pyramid[0].shape[-2:]
        hi, wi = classes.shape[-2:]
        if (hi, wi) != (h0 * self.out_stride, w0 * self.out_stride):
            raise ValueError(f"trimap {hi}x{wi} does not match pyramid base {h0}x{w0} at stride {self.out_stride}")
        d = pyramid[-1]
        for lvl in range(len(pyramid) - 2, -1, -1):
            deeper = d
            d = T.relu(self.merge[str(lvl)](T.concat([T.upsample_nearest(deeper, 2), pyramid[lvl]], axis=1)))
            mgf = self.mgf.get(str(lvl))
            if mgf is not None:
                mask = non_background_mask(downsample_trimap(classes, self.strides[lvl - 1]), pyramid[lvl - 1].dtype)
                d = mgf(pyramid[lvl - 1], d, deeper, mask)
        d = T.relu(self.head(T.upsample_nearest(d, self.out_stride)))
        return T.sigmoid(self.out(d))
