"""
A desk-sized matting corpus
===========================

Procedural foregrounds with soft alpha, composited over smooth backgrounds,
trimaps from eroded certainty masks, and a crop that always lands on the
unknown band. Writes the corpus as PPM/PGM files plus a manifest.
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from trimatte.data import composite, crop_unknown_centered, generate_trimap, load_corpus, save_corpus, synth_dataset
from trimatte.trimap import FOREGROUND, UNKNOWN

samples = synth_dataset(10, size=64, seed=0, tt_ratio=0.3)
for s in samples:
    fg_share = (s.trimap.classes == FOREGROUND).mean()
    print(f"{s.name}  alpha max {s.alpha.max():.2f}  unknown {s.unknown_mask().mean():5.1%}  fg {fg_share:5.1%}")

# blending rule
fg, bg = np.full((3, 2, 2), 0.8), np.full((3, 2, 2), 0.4)
print(composite(fg, bg, np.full((2, 2), 0.25))[0])

# larger kernels only widen the unknown band
alpha = samples[0].alpha
for k in (1, 5, 9, 15):
    print("kernel", k, "unknown pixels", int((generate_trimap(alpha, k).classes == UNKNOWN).sum()))

rng = np.random.default_rng(0)
crop = crop_unknown_centered(samples[0], 32, rng)
print("crop", crop.shape, "has unknown:", bool(crop.unknown_mask().any()))

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
manifest = save_corpus(samples, out, split="train")
print("wrote", manifest)
back = load_corpus(manifest)
print("reloaded", len(back), "samples; worst image byte error",
      max(np.abs(a.image - b.image).max() for a, b in zip(samples, back)) * 255)
