"""
Trimap classes as learnable tokens
==================================

A trimap becomes a per-pixel token map, and that map shifts the attention
queries of a windowed transformer block. With all tokens at zero the block is
an ordinary one.
"""
import math

import numpy as np

from trimatte.encoder import TransformerBlock, attention_logits, tgtb_forward
from trimatte.tensor import Tensor
from trimatte.trimap import Trimap, TriTokenTable, build_tritoken_map, downsample_trimap

rng = np.random.default_rng(1)

# bytes 0 / 128 / 255 decode to background / unknown / foreground
raw = np.array([[0, 0, 128, 255],
                [0, 128, 255, 255],
                [0, 128, 128, 255],
                [0, 0, 128, 255]], dtype=np.uint8)
trimap = Trimap.from_bytes(raw)
print(trimap.classes)

# default init puts 0, 1, 2 in every channel of the three tokens
table = TriTokenTable("demo", channels=4)
print(table.tokens.data)
print(build_tritoken_map(trimap, table).data[0])

# stride-2 feature maps see the top-left pixel of each cell
print(downsample_trimap(trimap, 2).classes)

# a tri-token guided block on a 4x4 grid with 2x2 windows
dim = 4
block = TransformerBlock(dim, heads=2, mlp_ratio=2, rng=rng).astype(np.float64)
table = TriTokenTable("tgtb", dim, "random", rng, dtype=np.float64)
x = Tensor(rng.standard_normal((dim, 4, 4)))
out = tgtb_forward(x, trimap, table, block, window_size=2)
print("TGTB output", out.shape)

table.tokens.data[:] = 0
vanilla = block(x.transpose(1, 2, 0).reshape(1, 4, 4, dim), 2).data[0].transpose(2, 0, 1)
print("zero tokens == vanilla:", np.abs(tgtb_forward(x, trimap, table, block, 2).data - vanilla).max())

# flipping one position's class moves exactly one row of logits
tokens = rng.standard_normal((3, dim))
q, k = rng.standard_normal((4, dim)), rng.standard_normal((4, dim))
cls = np.array([1, 0, 2, 1])
flip = cls.copy()
flip[0] = 0
delta = attention_logits(Tensor(q + tokens[flip]), Tensor(k)).data - attention_logits(Tensor(q + tokens[cls]), Tensor(k)).data
print(np.round(delta, 6))
print("predicted row 0:", np.round((tokens[0] - tokens[1]) @ k.T / math.sqrt(dim), 6))
