"""Tri-token guided encoder: a small conv extractor followed by four windowed-attention stages.

Feature maps crossing module boundaries are NCHW. Inside a transformer stage
features are kept channels-last ([N, H, W, C]) so attention, layer norm and
the MLP act on the trailing axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .nn import Conv2d, LayerNorm, Linear, Module
from .tensor import Tensor
from .trimap import TOKEN_INITS, TriTokenTable, build_tritoken_map, downsample_trimap


@dataclass
class EncoderConfig:
    cnn_channels: list[int] = field(default_factory=lambda: [8, 16])
    stage_channels: list[int] = field(default_factory=lambda: [16, 32, 64, 128])
    stage_depths: list[int] = field(default_factory=lambda: [1, 1, 2, 1])
    heads: list[int] = field(default_factory=lambda: [1, 2, 4, 4])
    window_size: int = 4
    mlp_ratio: int = 4
    tgtb_period: int = 5
    cnn_inject_positions: list[int] = field(default_factory=lambda: [2])
    transformer_inject_stages: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    token_init: str = "0,1,2"

    def validate(self) -> None:
        if len(self.cnn_channels) < 1:
            raise ConfigError("cnn_channels must list at least one layer")
        for name in ("stage_channels", "stage_depths", "heads"):
            if len(getattr(self, name)) != 4:
                raise ConfigError(f"{name} must have 4 entries, got {getattr(self, name)}")
        for c, h in zip(self.stage_channels, self.heads):
            if h < 1 or c % h:
                raise ConfigError(f"stage channels {c} not divisible by heads {h}")
        if any(d < 1 for d in self.stage_depths):
            raise ConfigError("stage_depths must be >= 1")
        if any(c < 1 for c in self.cnn_channels + self.stage_channels):
            raise ConfigError("channel widths must be positive")
        if self.window_size < 1:
            raise ConfigError("window_size must be >= 1")
        if self.tgtb_period < 1:
            raise ConfigError("tgtb_period must be >= 1")
        if self.mlp_ratio < 1:
            raise ConfigError("mlp_ratio must be >= 1")
        bad = set(self.cnn_inject_positions) - set(range(1, len(self.cnn_channels) + 1))
        if bad:
            raise ConfigError(f"cnn_inject_positions {sorted(bad)} outside 1..{len(self.cnn_channels)}")
        bad = set(self.transformer_inject_stages) - {1, 2, 3, 4}
        if bad:
            raise ConfigError(f"transformer_inject_stages {sorted(bad)} outside 1..4")
        if self.token_init not in TOKEN_INITS:
            raise ConfigError(f"token_init must be one of {TOKEN_INITS}")

    @property
    def cnn_stride(self) -> int:
        return 2 ** len(self.cnn_channels)

    @property
    def input_multiple(self) -> int:
        """Input sides must be a multiple of this (the deepest stride)."""
        return self.cnn_stride * 8

    def stage_stride(self, stage: int) -> int:
        return self.cnn_stride * 2 ** (stage - 1)

    def tgtb_layout(self) -> list[list[bool]]:
        """Per stage, per block: is this block a TGTB?

        Blocks are counted over the whole encoder; a block is a TGTB when its
        stage takes tokens and it is either the stage's first block or its
        global index is a multiple of ``tgtb_period``.
        """
        layout, g = [], 0
        for s, depth in enumerate(self.stage_depths, start=1):
            row = []
            for b in range(depth):
                row.append(s in self.transformer_inject_stages and (b == 0 or g % self.tgtb_period == 0))
                g += 1
            layout.append(row)
        return layout


# -- windows -------------------------------------------------------------------

def partition_windows(x: Tensor, m: int) -> Tensor:
    """[N,H,W,C] -> [N*nW, M*M, C], windows in row-major order."""
    n, h, w, c = x.shape
    if h % m or w % m:
        raise ValueError(f"window size {m} does not divide {h}x{w}")
    x = x.reshape(n, h // m, m, w // m, m, c)
    x = x.transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(n * (h // m) * (w // m), m * m, c)


def reverse_windows(windows: Tensor, m: int, h: int, w: int) -> Tensor:
    """Inverse of :func:`partition_windows`."""
    c = windows.shape[-1]
    x = windows.reshape(-1, h // m, w // m, m, m, c)
    x = x.transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(-1, h, w, c)


def window_partition(x: Tensor, m: int) -> Tensor:
    """[C,H,W] -> [nW, M*M, C]."""
    c, h, w = x.shape
    return partition_windows(x.transpose(1, 2, 0).reshape(1, h, w, c), m)


def window_reverse(windows: Tensor, m: int, h: int, w: int) -> Tensor:
    """[nW, M*M, C] -> [C,H,W]."""
    x = reverse_windows(windows, m, h, w)
    return x.reshape(h, w, windows.shape[-1]).transpose(2, 0, 1)


# -- attention -----------------------------------------------------------------

def attention_logits(q: Tensor, k: Tensor) -> Tensor:
    """Q K^T / sqrt(d) over the last two axes."""
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"query/key dims differ: {q.shape} vs {k.shape}")
    d = q.shape[-1]
    kt = k.transpose(tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))
    return (q @ kt) * (1.0 / math.sqrt(d))


def windowed_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(Q K^T / sqrt(d)) V for one window (or a batch of them)."""
    if q.shape != k.shape or k.shape[:-1] != v.shape[:-1]:
        raise ValueError(f"attention shape mismatch: Q{q.shape} K{k.shape} V{v.shape}")
    return T.softmax(attention_logits(q, k), axis=-1) @ v


def tritoken_attention(q: Tensor, k: Tensor, v: Tensor, window_tokens: Tensor) -> Tensor:
    """Attention with the tri-token map added to the query before the dot product."""
    if window_tokens.shape != q.shape:
        raise ValueError(f"token shape {window_tokens.shape} != query shape {q.shape}")
    return windowed_attention(q + window_tokens, k, v)


class WindowAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        self.dim = dim
        self.heads = heads
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.proj = Linear(dim, dim, rng)

    def _split(self, x: Tensor) -> Tensor:
        b, n, c = x.shape
        return x.reshape(b, n, self.heads, c // self.heads).transpose(0, 2, 1, 3)

    def __call__(self, x: Tensor, m: int, tokens: Tensor | None = None, probe: dict | None = None) -> Tensor:
        """``x`` and ``tokens`` are [N,H,W,C]; returns [N,H,W,C]."""
        n, h, w, c = x.shape
        xw = partition_windows(x, m)
        q = self._split(self.q(xw))
        k = self._split(self.k(xw))
        v = self._split(self.v(xw))
        if tokens is not None:
            # the token map is laid out exactly like Q, so it splits across heads the same way
            q = q + self._split(partition_windows(tokens, m))
        logits = attention_logits(q, k)
        attn = T.softmax(logits, axis=-1)
        if probe is not None:
            probe["logits"] = logits.data.copy()
            probe["attn"] = attn.data.copy()
            probe["window"] = m
            probe["grid"] = (h, w)
        out = (attn @ v).transpose(0, 2, 1, 3).reshape(xw.shape[0], m * m, c)
        return reverse_windows(self.proj(out), m, h, w)


class TransformerBlock(Module):
    """Pre-norm windowed-attention block; with a token table it is a TGTB."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int, rng: np.random.Generator,
                 table: TriTokenTable | None = None):
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(dim, dim * mlp_ratio, rng)
        self.fc2 = Linear(dim * mlp_ratio, dim, rng)
        self.table = table

    @property
    def is_tgtb(self) -> bool:
        return self.table is not None

    def __call__(self, x: Tensor, m: int, classes: np.ndarray | None = None, probe: dict | None = None) -> Tensor:
        tokens = None
        if self.table is not None:
            if classes is None or classes.shape[-2:] != x.shape[1:3]:
                got = None if classes is None else classes.shape[-2:]
                raise ValueError(f"stage trimap {got} does not match feature map {x.shape[1:3]}")
            tokens = build_tritoken_map(classes, self.table, channels_last=True)
        x = x + self.attn(self.norm1(x), m, tokens, probe)
        return x + self.fc2(T.gelu(self.fc1(self.norm2(x))))


def tgtb_forward(x: Tensor, trimap, table: TriTokenTable, block: TransformerBlock, window_size: int) -> Tensor:
    """Run ``block`` as a TGTB on a single [C,H,W] map with ``trimap`` at the same resolution."""
    c, h, w = x.shape
    classes = trimap.classes if hasattr(trimap, "classes") else np.asarray(trimap)
    if classes.shape != (h, w):
        raise ValueError(f"trimap {classes.shape} does not match feature map {(h, w)}")
    saved, block.table = block.table, table
    try:
        out = block(x.transpose(1, 2, 0).reshape(1, h, w, c), min(window_size, h, w), classes[None])
    finally:
        block.table = saved
    return out.reshape(h, w, c).transpose(2, 0, 1)


# -- encoder -------------------------------------------------------------------

class CNNExtractor(Module):
    """Stride-2 conv blocks; enabled positions add the tri-token map after the block."""

    def __init__(self, channels: list[int], positions, rng: np.random.Generator,
                 token_init: str = "0,1,2", in_channels: int = 3):
        self.layers = []
        cin = in_channels
        for cout in channels:
            self.layers.append(Conv2d(cin, cout, 3, rng, stride=2))
            cin = cout
        self.tables = {
            str(p): TriTokenTable(f"cnn.{p}", channels[p - 1], token_init, rng) for p in sorted(positions)
        }

    def __call__(self, x: Tensor, classes: np.ndarray, features: list | None = None) -> Tensor:
        for i, layer in enumerate(self.layers, start=1):
            x = T.relu(layer(x))
            table = self.tables.get(str(i))
            if table is not None:
                stage_classes = downsample_trimap(classes, 2 ** i)
                x = x + build_tritoken_map(stage_classes, table)
            if features is not None:
                features.append(x)
        return x


class Stage(Module):
    def __init__(self, index: int, cin: int, cout: int, depth: int, heads: int, mlp_ratio: int,
                 tgtb: list[bool], rng: np.random.Generator, token_init: str):
        self.index = index
        if index == 1:
            self.embed = Conv2d(cin, cout, 1, rng, padding=0)
        else:
            self.embed = Conv2d(cin, cout, 2, rng, stride=2, padding=0)
        self.blocks = []
        for b in range(depth):
            table = TriTokenTable(f"stage{index}.block{b}", cout, token_init, rng) if tgtb[b] else None
            self.blocks.append(TransformerBlock(cout, heads, mlp_ratio, rng, table))
        self.norm = LayerNorm(cout)

    def __call__(self, x: Tensor, classes: np.ndarray, window: int, probes: dict | None = None) -> Tensor:
        x = self.embed(x)
        n, c, h, w = x.shape
        m = min(window, h, w)
        x = x.transpose(0, 2, 3, 1)
        for b, block in enumerate(self.blocks):
            probe = None
            if probes is not None and (self.index, b) in probes:
                probe = probes[(self.index, b)]
            x = block(x, m, classes, probe)
        return self.norm(x).transpose(0, 3, 1, 2)


class Encoder(Module):
    """Image + trimap -> five-level feature pyramid (strides 2, 4, 8, 16, 32 by default)."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        self.cnn = CNNExtractor(config.cnn_channels, config.cnn_inject_positions, rng, config.token_init)
        layout = config.tgtb_layout()
        self.stages = []
        cin = config.cnn_channels[-1]
        for s in range(4):
            self.stages.append(Stage(s + 1, cin, config.stage_channels[s], config.stage_depths[s],
                                     config.heads[s], config.mlp_ratio, layout[s], rng, config.token_init))
            cin = config.stage_channels[s]

    def token_tables(self) -> list[TriTokenTable]:
        tables = list(self.cnn.tables.values())
        for stage in self.stages:
            tables += [b.table for b in stage.blocks if b.table is not None]
        return tables

    def check_input(self, shape: tuple[int, ...]) -> None:
        h, w = shape[-2:]
        mult = self.config.input_multiple
        if h % mult or w % mult:
            raise ValueError(f"input {h}x{w} must be divisible by {mult}")

    def __call__(self, x: Tensor, classes: np.ndarray, probes: dict | None = None) -> list[Tensor]:
        """``x`` is [N,3,H,W] in [0,1]; ``classes`` is [N,H,W] trimap classes."""
        self.check_input(x.shape)
        if classes.shape[-2:] != x.shape[-2:]:
            raise ValueError(f"trimap {classes.shape[-2:]} does not match image {x.shape[-2:]}")
        cnn_feats: list[Tensor] = []
        feat = self.cnn(x, classes, cnn_feats)
        pyramid = cnn_feats[:-1]
        for s, stage in enumerate(self.stages, start=1):
            stage_classes = downsample_trimap(classes, self.config.stage_stride(s))
            feat = stage(feat, stage_classes, self.config.window_size, probes)
            pyramid.append(feat)
        return pyramid
