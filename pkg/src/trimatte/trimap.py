"""Trimaps, learnable tri-token tables and the trimap -> token-map substitution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Module, parameter
from .tensor import Tensor

BACKGROUND, UNKNOWN, FOREGROUND = 0, 1, 2
_BYTE_OF_CLASS = np.array([0, 128, 255], dtype=np.uint8)

TOKEN_INITS = ("0,1,2", "-1,0,1", "random")


class TrimapFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Trimap:
    """Per-pixel class map: 0 background, 1 unknown, 2 foreground."""

    classes: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.classes)
        if c.ndim != 2:
            raise ValueError(f"trimap must be 2-D, got shape {c.shape}")
        if c.size and (c.min() < 0 or c.max() > 2):
            raise ValueError("trimap classes must be in {0, 1, 2}")
        object.__setattr__(self, "classes", c.astype(np.uint8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.classes.shape

    @classmethod
    def from_bytes(cls, values: np.ndarray) -> "Trimap":
        return cls(decode_trimap_bytes(values))

    def to_bytes(self) -> np.ndarray:
        return encode_trimap_bytes(self.classes)

    def unknown_mask(self) -> np.ndarray:
        return self.classes == UNKNOWN


def _classes(trimap) -> np.ndarray:
    return trimap.classes if isinstance(trimap, Trimap) else np.asarray(trimap)


def encode_trimap_bytes(classes: np.ndarray) -> np.ndarray:
    return _BYTE_OF_CLASS[np.asarray(classes, dtype=np.intp)]


def decode_trimap_bytes(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    bad = (values != 0) & (values != 128) & (values != 255)
    if bad.any():
        pos = tuple(int(i) for i in np.argwhere(bad)[0])
        raise TrimapFormatError(f"invalid trimap byte {int(values[pos])} at pixel {pos}; expected 0, 128 or 255")
    out = np.zeros(values.shape, dtype=np.uint8)
    out[values == 128] = UNKNOWN
    out[values == 255] = FOREGROUND
    return out


def downsample_trimap(trimap, factor: int):
    """Nearest-neighbour downsampling that keeps the top-left class of each cell.

    Accepts a :class:`Trimap` (returns a Trimap) or a class array whose last
    two axes are spatial (returns an array).
    """
    c = _classes(trimap)
    if factor < 1 or factor & (factor - 1):
        raise ValueError(f"downsample factor must be a power of two, got {factor}")
    h, w = c.shape[-2:]
    if h % factor or w % factor:
        raise ValueError(f"trimap {h}x{w} not divisible by factor {factor}")
    out = np.ascontiguousarray(c[..., ::factor, ::factor])
    return Trimap(out) if isinstance(trimap, Trimap) else out


def non_background_mask(trimap, dtype=np.float32) -> Tensor:
    """1 on unknown/foreground, 0 on background; a leading singleton channel is added."""
    c = _classes(trimap)
    return Tensor((c != BACKGROUND)[..., None, :, :].astype(dtype))


def init_tokens(channels: int, strategy: str = "0,1,2", rng: np.random.Generator | None = None) -> np.ndarray:
    """Initial [3, C] token values: constant fills or uniform noise in [-1, 1]."""
    if strategy == "0,1,2":
        return np.repeat(np.array([[0.0], [1.0], [2.0]]), channels, axis=1)
    if strategy == "-1,0,1":
        return np.repeat(np.array([[-1.0], [0.0], [1.0]]), channels, axis=1)
    if strategy == "random":
        rng = rng if rng is not None else np.random.default_rng(0)
        return rng.uniform(-1.0, 1.0, size=(3, channels))
    raise ValueError(f"unknown token init '{strategy}', choose from {TOKEN_INITS}")


class TriTokenTable(Module):
    """Three learnable C-dim vectors (background, unknown, foreground) for one injection site."""

    def __init__(self, site_id: str, channels: int, strategy: str = "0,1,2",
                 rng: np.random.Generator | None = None, dtype=np.float32):
        self.site_id = site_id
        self.channels = channels
        self.tokens = parameter(init_tokens(channels, strategy, rng), dtype)

    def map(self, trimap, channels_last: bool = False) -> Tensor:
        return build_tritoken_map(trimap, self, channels_last)


def build_tritoken_map(trimap, table: TriTokenTable | Tensor, channels_last: bool = False) -> Tensor:
    """Replace every trimap pixel by its class token.

    A 2-D trimap gives [C,h,w]; a batch of class maps [N,h,w] gives [N,C,h,w].
    With ``channels_last`` the channel axis is kept last instead.
    """
    tokens = table.tokens if isinstance(table, TriTokenTable) else table
    if tokens.ndim != 2 or tokens.shape[0] != 3:
        raise ValueError(f"token table must be [3, C], got {tokens.shape}")
    c = _classes(trimap)
    out = T.take(tokens, c)  # [..., h, w, C]
    if channels_last:
        return out
    axes = tuple(range(c.ndim - 2)) + (c.ndim, c.ndim - 2, c.ndim - 1)
    return T.transpose(out, axes)
